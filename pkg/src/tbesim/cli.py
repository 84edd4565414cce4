"""Experiment front-end: figure presets that write CSV sweeps.

``tbe-sim <preset> --config <path> --seed <u64> --trials <n> --out <dir>``

Exit codes: 0 success, 2 config error, 3 infeasible optimization,
4 theory/simulation disagreement (only with ``--strict``).
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import GeometryScenario, draw_geometry
from .config import ConfigError, SystemConfig, load_config
from .optimize import (
    ConstraintSpec,
    dca_multistart,
    maximize_metric,
    solve_constrained_afp,
)
from .simkit import run_montecarlo
from .theory import PowerAllocation, Scenario, binom_cdf_all, evaluate, false_alarm_all

SCHEMA_VERSION = 1
DEFAULT_TRIALS = 10_000
DEFAULT_DEPLOY_SEED = 1
PASS_FRACTION = 0.95
N_SIGMA = 3.0

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_MISMATCH = 0, 2, 3, 4

SER_METRICS = ("ser_m", "ser_t", "ser_m_e", "ser_t_e")
FIG3_GEOMETRIES = ((80.0, 1.0), (60.0, 1.0), (80.0, 0.0), (60.0, 0.0))
FIG5_GEOMETRIES = ((80.0, 2.0), (60.0, 2.0), (80.0, 1.0), (60.0, 1.0), (80.0, 0.0), (60.0, 0.0))
ROC_RHOS = (0.9999, 0.9995, 0.999, 0.997)


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    figure: str
    axis: str
    values: tuple
    columns: tuple
    overrides: dict = field(default_factory=dict)
    simulated: bool = False


def _ser_columns(lead):
    cols = list(lead)
    for m in SER_METRICS:
        cols += [f"{m}_theory", f"{m}_sim", f"{m}_stderr"]
    return tuple(cols + ["h_eve", "dtheta", "cells_passed"])


PRESETS = {
    p.name: p
    for p in (
        ExperimentPreset("ser-vs-rho", "2", "rho", tuple(np.linspace(0.9, 1.0, 50)),
                         _ser_columns(("rho", "phi")), simulated=True),
        ExperimentPreset("ser-vs-phi", "3", "phi", tuple(np.linspace(0.05, 1.0, 20)),
                         _ser_columns(("phi", "rho")), simulated=True),
        ExperimentPreset("roc", "4", "eta", ROC_RHOS,
                         ("rho", "eta", "pf_theory", "pf_prior_theory", "pf_sim", "pf_stderr",
                          "pd_theory", "pd_sim", "pd_stderr"), simulated=True),
        ExperimentPreset("secrecy-surface", "5", "rho,phi", FIG5_GEOMETRIES,
                         ("h_eve", "dtheta", "rho", "phi", "r_sec", "r_u", "r_e", "r_baseline")),
        ExperimentPreset("secrecy-compare", "7", "dtheta", tuple(float(d) for d in range(11)),
                         ("h_eve", "dtheta", "tbe_rho", "tbe_phi", "tbe_r_sec", "base_rho", "base_phi",
                          "base_r", "gamma_mean")),
        ExperimentPreset("afp-surface", "8", "rho,phi", (),
                         ("rho", "phi", "afp", "p_d", "bler", "p_w")),
        ExperimentPreset("afp-constraint", "9", "pw_min", tuple(np.linspace(0.01, 0.3, 30)),
                         ("h_eve", "pw_min", "pd_min", "tbe_afp", "tbe_case", "tbe_rho", "tbe_phi",
                          "base_afp", "base_case", "base_rho", "base_phi")),
        ExperimentPreset("optimize", "solver", "-", (),
                         ("solver", "rho", "phi", "objective", "case", "p_d", "p_w")),
    )
}


@dataclass
class RunResult:
    columns: tuple
    rows: list
    cells: int = 0
    passed: int = 0
    notes: list = field(default_factory=list)
    infeasible: bool = False

    @property
    def pass_fraction(self) -> float:
        return self.passed / self.cells if self.cells else 1.0


# -- shared helpers ----------------------------------------------------------------

def default_scenario(cfg: SystemConfig, deploy_seed: int = DEFAULT_DEPLOY_SEED) -> Scenario:
    """The fixed deployment every preset uses: beam-snapped users from ``deploy_seed``."""
    return Scenario(cfg, draw_geometry(cfg, np.random.default_rng(deploy_seed), "orthogonal"))


def point_seed(seed: int, index: int) -> int:
    """Independent Monte Carlo seed for sweep point ``index``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def baseline_no_tbe(cfg: SystemConfig, geometry: GeometryScenario, p: PowerAllocation) -> float:
    """Secrecy rate of the same ZF/AN/tag-embedding link without tag-based encoding."""
    return evaluate(Scenario(cfg, geometry), p).r_baseline


def ser_point(scn: Scenario, p: PowerAllocation, n_blocks: int, seed: int, workers: int = 1,
              combining: str = "right-inverse", g_variant: str = "printed"):
    """Theory and simulated SERs at one allocation: dict metric -> (theory, sim, stderr, passed)."""
    th = evaluate(scn, p, g_variant=g_variant)
    rep = run_montecarlo(scn, p, n_blocks, seed, workers=workers, combining=combining, jamming=False)
    u, e = th.links.user, th.links.eve
    theory = {"ser_m": u.ser_m, "ser_t": u.ser_t, "ser_m_e": float(np.mean(e.ser_m)),
              "ser_t_e": float(np.mean(e.ser_t))}
    out = {}
    for m in SER_METRICS:
        sim, se = rep[m]
        n = max(rep.n_for(m), 1)
        t = theory[m]
        se = max(se, math.sqrt(t * (1 - t) / n), 1.0 / n)
        out[m] = (t, sim, se, abs(sim - t) <= N_SIGMA * se)
    return out


def _ser_sweep(scn: Scenario, points, lead, n_blocks, seed, workers, combining, g_variant, start_index=0):
    res = RunResult(_ser_columns(lead), [])
    for i, (rho, phi) in enumerate(points):
        cells = ser_point(scn, PowerAllocation(rho, phi), n_blocks, point_seed(seed, start_index + i), workers,
                          combining, g_variant)
        row = [rho, phi] if lead[0] == "rho" else [phi, rho]
        ok = 0
        for m in SER_METRICS:
            t, s, se, passed = cells[m]
            row += [t, s, se]
            ok += int(passed)
        row += [scn.cfg.eve_height, scn.cfg.angle_offset_deg, ok]
        res.rows.append(row)
        res.cells += len(SER_METRICS)
        res.passed += ok
    return res


# -- presets -----------------------------------------------------------------------

def run_ser_vs_rho(scn, opts) -> RunResult:
    pts = [(float(r), 1.0) for r in PRESETS["ser-vs-rho"].values]
    return _ser_sweep(scn, pts, ("rho", "phi"), opts.trials, opts.seed, opts.workers, opts.combining,
                      opts.g_variant)


def run_ser_vs_phi(scn, opts) -> RunResult:
    phis = PRESETS["ser-vs-phi"].values
    total = RunResult(_ser_columns(("phi", "rho")), [])
    for k, (h, dt) in enumerate(FIG3_GEOMETRIES):
        s = scn.with_eves(dt, h)
        part = _ser_sweep(s, [(0.95, float(ph)) for ph in phis], ("phi", "rho"), opts.trials, opts.seed,
                          opts.workers, opts.combining, opts.g_variant, start_index=k * len(phis))
        total.rows += part.rows
        total.cells += part.cells
        total.passed += part.passed
        user = np.array([r[2] for r in part.rows])
        eve = np.array([r[8] for r in part.rows])
        total.notes.append(f"h_eve={h:g} m, dtheta={dt:g} deg: AN crossover (eve SER > user SER) "
                           f"{'reached' if np.any(eve > user) else 'not reached'} in theory")
    return total


def run_roc(scn, opts) -> RunResult:
    res = RunResult(PRESETS["roc"].columns, [])
    T = scn.cfg.block_len
    for i, rho in enumerate(ROC_RHOS):
        p = PowerAllocation(rho, 1.0)
        th = evaluate(scn, p)
        p_t = th.links.user.ser_t
        pd = binom_cdf_all(T, p_t)
        pf = false_alarm_all(T, p_t, th.p_b)
        pf_prior = false_alarm_all(T, p_t, 0.0)
        rep = run_montecarlo(scn, p, opts.trials, point_seed(opts.seed, i), eta=T, workers=opts.workers)
        c = rep.counts
        n_d, n_f = max(int(c.legit_hist.sum()), 1), max(int(c.jam_hist.sum()), 1)
        roc = rep.roc()
        for eta in range(T + 1):
            sf, sd = roc[eta, 1], roc[eta, 2]
            se_f = max(math.sqrt(sf * (1 - sf) / n_f), math.sqrt(pf[eta] * (1 - pf[eta]) / n_f), 1.0 / n_f)
            se_d = max(math.sqrt(sd * (1 - sd) / n_d), math.sqrt(pd[eta] * (1 - pd[eta]) / n_d), 1.0 / n_d)
            res.rows.append([rho, eta, pf[eta], pf_prior[eta], sf, se_f, pd[eta], sd, se_d])
            res.cells += 2
            res.passed += int(abs(sf - pf[eta]) <= N_SIGMA * se_f) + int(abs(sd - pd[eta]) <= N_SIGMA * se_d)
        res.notes.append(f"rho={rho}: eta*={th.eta}, max |P_f - P_f(prior)| = {np.max(np.abs(pf - pf_prior)):.2e}")
    return res


def _surface(opts, default_steps):
    n = opts.steps or default_steps
    return np.linspace(0.9, 1.0, n), np.linspace(1.0 / n, 1.0, n)


def run_secrecy_surface(scn, opts) -> RunResult:
    res = RunResult(PRESETS["secrecy-surface"].columns, [])
    rhos, phis = _surface(opts, 21)
    for h, dt in FIG5_GEOMETRIES:
        s = scn.with_eves(dt, h)
        for r in rhos:
            for ph in phis:
                m = evaluate(s, PowerAllocation(float(r), float(ph)))
                res.rows.append([h, dt, r, ph, m.r_sec, m.r_u, m.r_e, m.r_baseline])
        opt = dca_multistart(s)
        res.notes.append(f"h_eve={h:g} m, dtheta={dt:g} deg: DCA rho*={opt.p.rho:.4f} phi*={opt.p.phi:.4f} "
                         f"R_sec={opt.r_sec:.3f}")
    return res


def run_secrecy_compare(scn, opts) -> RunResult:
    res = RunResult(PRESETS["secrecy-compare"].columns, [])
    for h in (80.0, 60.0):
        for dt in PRESETS["secrecy-compare"].values:
            s = scn.with_eves(dt, h)
            tbe = dca_multistart(s)
            bp, br = maximize_metric(s, "r_baseline")
            res.rows.append([h, dt, tbe.p.rho, tbe.p.phi, tbe.r_sec, bp.rho, bp.phi, br,
                             float(np.mean(s.gamma_e))])
    return res


def run_afp_surface(scn, opts) -> RunResult:
    res = RunResult(PRESETS["afp-surface"].columns, [])
    rhos, phis = _surface(opts, 41)
    for r in rhos:
        for ph in phis:
            m = evaluate(scn, PowerAllocation(float(r), float(ph)))
            res.rows.append([r, ph, m.afp, m.p_d, m.bler, m.p_w])
    return res


def run_afp_constraint(scn, opts) -> RunResult:
    res = RunResult(PRESETS["afp-constraint"].columns, [])
    pd0 = opts.pd_min if opts.pd_min is not None else 0.999
    for h in (80.0, 60.0):
        s = scn.with_eves(1.0, h)
        for pw0 in PRESETS["afp-constraint"].values:
            spec = ConstraintSpec(float(pw0), pd0)
            a = solve_constrained_afp(s, spec)
            b = solve_constrained_afp(s, spec, scheme="baseline")
            res.rows.append([h, pw0, pd0, a.afp, a.case or 0, *(_alloc(a.p)), b.afp, b.case or 0, *(_alloc(b.p))])
    return res


def _alloc(p):
    return (p.rho, p.phi) if p is not None else (float("nan"), float("nan"))


def run_optimize(scn, opts) -> RunResult:
    res = RunResult(PRESETS["optimize"].columns, [])
    dca = dca_multistart(scn)
    m = evaluate(scn, dca.p)
    res.rows.append(["dca_r_sec", dca.p.rho, dca.p.phi, dca.r_sec, 0, m.p_d, m.p_w])
    res.notes.append(f"DCA: rho*={dca.p.rho:.6f} phi*={dca.p.phi:.6f} R_sec={dca.r_sec:.4f} "
                     f"(R_U-R_E={dca.r_sec_dc:.4f}, {dca.iterations} iterations)")
    spec = ConstraintSpec(opts.pw_min if opts.pw_min is not None else 0.01,
                          opts.pd_min if opts.pd_min is not None else 0.5)
    sol = solve_constrained_afp(scn, spec)
    res.rows.append(["afp", *_alloc(sol.p), sol.afp, sol.case or 0, sol.p_d, sol.p_w])
    if sol.feasible:
        res.notes.append(f"AFP: rho*={sol.p.rho:.6f} phi*={sol.p.phi:.6f} AFP={sol.afp:.6g} KKT case {sol.case}")
    else:
        res.infeasible = True
        res.notes.append(f"AFP: infeasible for P_w0={spec.pw_min}, P_d0={spec.pd_min} (AFP=1)")
    return res


RUNNERS = {
    "ser-vs-rho": run_ser_vs_rho,
    "ser-vs-phi": run_ser_vs_phi,
    "roc": run_roc,
    "secrecy-surface": run_secrecy_surface,
    "secrecy-compare": run_secrecy_compare,
    "afp-surface": run_afp_surface,
    "afp-constraint": run_afp_constraint,
    "optimize": run_optimize,
}


# -- output ------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, header has {len(columns)}")
            w.writerow([_fmt(v) for v in row])


def run_experiment(preset: str, cfg: SystemConfig, opts) -> RunResult:
    if preset not in RUNNERS:
        raise KeyError(f"unknown preset {preset!r}")
    scn = default_scenario(cfg, opts.deploy_seed)
    return RUNNERS[preset](scn, opts)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tbe-sim", description=__doc__.splitlines()[0])
    ap.add_argument("preset", choices=sorted(PRESETS))
    ap.add_argument("--config", type=Path, help="key = value scenario file (defaults: parameter table)")
    ap.add_argument("--seed", type=int, default=0, help="Monte Carlo master seed (u64)")
    ap.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help="blocks per simulated sweep point")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    ap.add_argument("--strict", action="store_true",
                    help=f"exit 4 when fewer than {PASS_FRACTION:.0%} of theory/sim cells agree at 3 sigma")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--deploy-seed", type=int, default=DEFAULT_DEPLOY_SEED, help="seed of the fixed deployment")
    ap.add_argument("--steps", type=int, default=None, help="grid points per axis for surface presets")
    ap.add_argument("--combining", choices=("right-inverse", "sic"), default="right-inverse")
    ap.add_argument("--g-variant", choices=("printed", "projected", "rederived"), default="printed")
    ap.add_argument("--pw-min", type=float, default=None, help="secrecy constraint P_w0")
    ap.add_argument("--pd-min", type=float, default=None, help="authentication constraint P_d0")
    return ap


def main(argv=None) -> int:
    opts = build_parser().parse_args(argv)
    if not 0 <= opts.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if opts.trials < 1:
        print("error: --trials must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(opts.config) if opts.config else SystemConfig()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = run_experiment(opts.preset, cfg, opts)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    opts.out.mkdir(parents=True, exist_ok=True)
    path = opts.out / f"{opts.preset}.csv"
    write_csv(path, res.columns, res.rows)
    print(f"{opts.preset}: {len(res.rows)} rows -> {path} (schema v{SCHEMA_VERSION})")
    if res.cells:
        print(f"theory/sim: {res.passed}/{res.cells} cells within {N_SIGMA:g} sigma ({res.pass_fraction:.1%})")
    for note in res.notes:
        print(note)
    if res.infeasible:
        return EXIT_INFEASIBLE
    if opts.strict and res.cells and res.pass_fraction < PASS_FRACTION:
        return EXIT_MISMATCH
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
