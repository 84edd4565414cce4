"""Monte Carlo harness: block-level trials through the full TBE chain.

Blocks are simulated in fixed-size chunks. Chunk ``i`` draws everything
from ``SeedSequence([master_seed, i])``, so results do not depend on how
many workers run the chunks or in which order they finish. Only integer
counts leave a chunk; they are summed at the end.

Two shortcuts keep 10^5-block runs at desk scale, both exact in
distribution:

* the users' received samples are formed from the effective ZF gain
  ``h_u^H w_u`` directly, since ``h_u^H w_k = 0`` (k != u) and
  ``h_u^H V = 0`` hold identically;
* the eavesdroppers' AN term ``G^H V z`` is drawn as a K-dim Gaussian with
  covariance ``G^H V V^H G`` instead of materializing the null-space basis.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import complex_normal, los_matrices, rician_mix
from .config import format_config
from .receiver import detect_embedded_tag
from .tbe import QPSK, KeyMaterial, PowerSplit, generate_tags, nearest_qpsk_index, tag_symbols
from .theory import PowerAllocation, Scenario, SecurityMetrics, evaluate, info_ratio

CHUNK_BLOCKS = 1000
COND_LIMIT = 1e12

METRICS = ("ser_m", "ser_t", "ser_m_e", "ser_t_e", "p_d", "p_f", "leakage", "afp")


class DigestMismatchError(ValueError):
    """Theory and simulation describe different scenarios."""


def scenario_digest(scn: Scenario) -> str:
    h = hashlib.sha256(format_config(scn.cfg).encode())
    g = scn.geometry
    for arr in (g.ue_horiz_dists, g.ue_elevations, g.eve_elevations, g.ue_dists, g.eve_dists):
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


@dataclass
class Counts:
    """Additive per-chunk tallies."""

    T: int
    n_blocks: int = 0
    skipped: int = 0
    user_sym: int = 0
    user_msg_err: int = 0
    user_tag_err: int = 0
    eve_sym: int = 0
    eve_msg_err: int = 0
    eve_tag_err: int = 0
    eve_plain_err: int = 0
    afp_fail: int = 0
    # tag-mismatch histograms: error-free legitimate blocks (H1), legitimate
    # blocks with a ciphertext error (H0 by channel), jamming blocks (H0)
    legit_hist: np.ndarray = None
    err_hist: np.ndarray = None
    jam_hist: np.ndarray = None
    eve_tag_err_per_eve: np.ndarray = None

    def __post_init__(self):
        if self.legit_hist is None:
            self.legit_hist = np.zeros(self.T + 1, dtype=np.int64)
        if self.err_hist is None:
            self.err_hist = np.zeros(self.T + 1, dtype=np.int64)
        if self.jam_hist is None:
            self.jam_hist = np.zeros(self.T + 1, dtype=np.int64)

    def merge(self, other: "Counts") -> "Counts":
        out = Counts(self.T)
        for name in ("n_blocks", "skipped", "user_sym", "user_msg_err", "user_tag_err", "eve_sym",
                     "eve_msg_err", "eve_tag_err", "eve_plain_err", "afp_fail"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.legit_hist = self.legit_hist + other.legit_hist
        out.err_hist = self.err_hist + other.err_hist
        out.jam_hist = self.jam_hist + other.jam_hist
        a, b = self.eve_tag_err_per_eve, other.eve_tag_err_per_eve
        out.eve_tag_err_per_eve = b if a is None else (a if b is None else a + b)
        return out


def proportion(k: int, n: int) -> tuple[float, float]:
    if n <= 0:
        return float("nan"), float("nan")
    p = k / n
    return p, math.sqrt(p * (1 - p) / n)


@dataclass(frozen=True)
class TrialReport:
    n_blocks: int
    seed: int
    digest: str
    eta: int
    estimates: dict = field(repr=False)
    counts: Counts = field(repr=False)

    def __getitem__(self, name: str) -> tuple[float, float]:
        return self.estimates[name]

    def n_for(self, name: str) -> int:
        c = self.counts
        users = (c.n_blocks - c.skipped)
        return {"ser_m": c.user_sym, "ser_t": c.user_sym, "ser_m_e": c.eve_sym, "ser_t_e": c.eve_sym,
                "leakage": c.eve_sym, "p_d": c.legit_hist.sum(), "p_f": c.jam_hist.sum(),
                "afp": c.legit_hist.sum() + c.err_hist.sum()}.get(name, users)

    def roc(self) -> np.ndarray:
        """(eta, P_f, P_d) for every threshold, from this single pass."""
        c = self.counts
        pd = np.cumsum(c.legit_hist) / max(c.legit_hist.sum(), 1)
        pf = np.cumsum(c.jam_hist) / max(c.jam_hist.sum(), 1)
        return np.column_stack([np.arange(c.T + 1), pf, pd])

    def same_as(self, other: "TrialReport") -> bool:
        if (self.n_blocks, self.seed, self.digest, self.eta) != (other.n_blocks, other.seed, other.digest, other.eta):
            return False
        if self.estimates != other.estimates:
            return False
        return (np.array_equal(self.counts.legit_hist, other.counts.legit_hist)
                and np.array_equal(self.counts.err_hist, other.counts.err_hist)
                and np.array_equal(self.counts.jam_hist, other.counts.jam_hist))


def _finish(counts: Counts, seed: int, digest: str, eta: int) -> TrialReport:
    c = counts
    est = {
        "ser_m": proportion(c.user_msg_err, c.user_sym),
        "ser_t": proportion(c.user_tag_err, c.user_sym),
        "ser_m_e": proportion(c.eve_msg_err, c.eve_sym),
        "ser_t_e": proportion(c.eve_tag_err, c.eve_sym),
        "p_d": proportion(int(c.legit_hist[: eta + 1].sum()), int(c.legit_hist.sum())),
        "p_f": proportion(int(c.jam_hist[: eta + 1].sum()), int(c.jam_hist.sum())),
        "afp": proportion(c.afp_fail, int(c.legit_hist.sum() + c.err_hist.sum())),
        "plain_err_e": proportion(c.eve_plain_err, c.eve_sym),
    }
    # plug-in leakage ratio, averaged over eavesdroppers; delta-method std err
    if c.eve_tag_err_per_eve is not None and c.eve_sym:
        n_e = c.eve_sym / len(c.eve_tag_err_per_eve)
        p = c.eve_tag_err_per_eve / n_e
        lk = info_ratio(p)
        se = np.sqrt(p * (1 - p) / n_e) / ((1 - np.minimum(p, 1 - 1e-12)) * math.log(2))
        se = np.where((lk > 0) & (lk < 1), se, 0.0)
        est["leakage"] = (float(lk.mean()), float(np.sqrt(np.sum(se**2)) / len(se)))
    else:
        est["leakage"] = (float("nan"), float("nan"))
    return TrialReport(c.n_blocks, seed, digest, eta, est, counts)


def _regenerate(key: KeyMaterial, feat_hat, feat_true, tags_true):
    """Legitimate tag regeneration, hashing only where the detected feature differs."""
    out = tags_true.copy()
    bad = np.any(feat_hat != feat_true, axis=-1)
    if np.any(bad):
        out[bad] = generate_tags(key, feat_hat[bad])
    return out


def _psd_factor(cov):
    """Batched square-root factor of Hermitian PSD matrices (eigh, clipped)."""
    cov = 0.5 * (cov + cov.conj().swapaxes(-1, -2))
    lam, U = np.linalg.eigh(cov)
    return U * np.sqrt(np.clip(lam, 0.0, None))[..., None, :]


def _feature_of_index(idx):
    """Quadrant parity straight from the QPSK index (quadrants I, III -> 1)."""
    return (1 - (idx & 1)).astype(np.uint8)


def _detect(y_t, split: PowerSplit):
    """Receiver detection rules (ciphertext index, tag sign) on normalized samples.

    Same decisions as :func:`detect_ciphertext` / :func:`detect_embedded_tag`;
    the tag sign only needs the real part of the residual.
    """
    idx = nearest_qpsk_index(y_t, split.rho_m)
    if split.rho_t > 0:
        t_hat = np.where(y_t.real - split.rho_m * QPSK.real[idx] >= 0, 1.0, -1.0)
    else:
        t_hat = detect_embedded_tag(y_t, QPSK[idx], split.rho_m, split.rho_t)
    return idx, t_hat


def _simulate_chunk(scn: Scenario, split: PowerSplit, eta: int, key: KeyMaterial, n: int, seed: int,
                    chunk: int, noise_mw: float, combining: str = "right-inverse", jamming: bool = True,
                    jam_only: bool = False) -> Counts:
    cfg = scn.cfg
    main_ss, jam_ss = np.random.SeedSequence([seed, chunk]).spawn(2)
    rng = np.random.default_rng(main_ss)
    M, K, T = cfg.num_antennas, cfg.num_users, cfg.block_len
    P = cfg.tx_power_mw
    counts = Counts(T, n_blocks=n)

    if not jam_only:
        # transmit chain; index arithmetic: negating a QPSK point adds 2 (mod 4)
        s_idx = rng.integers(0, 4, (n, K, T))
        feat = _feature_of_index(s_idx)
        tbits = generate_tags(key, feat)
        t = tag_symbols(tbits)
        c_idx = (s_idx + 2 * (1 - tbits)) % 4
        x = split.rho_m * QPSK[c_idx] + split.rho_t * t

    # channels and balanced ZF precoder
    h_los, g_los = los_matrices(cfg, scn.geometry)
    H = rician_mix(h_los, complex_normal(rng, (n, M, K)), cfg.kappa)
    if not jam_only:
        G = rician_mix(g_los, complex_normal(rng, (n, M, K)), cfg.kappa)
    HH = H.conj().swapaxes(-1, -2)
    gram = HH @ H
    sv = np.linalg.svd(gram, compute_uv=False)
    ok = sv[:, -1] > sv[:, 0] / COND_LIMIT
    gram_inv = np.linalg.inv(np.where(ok[:, None, None], gram, np.eye(K)))
    W_raw = H @ gram_inv
    norms = np.linalg.norm(W_raw, axis=-2)
    inv_beta = 1.0 / scn.beta_u
    weight = np.sqrt(inv_beta / inv_beta.sum())
    W = W_raw / norms[:, None, :] * weight

    # legitimate link after normalization: y~ = gain * x + noise, gain = h_u^H w_u sqrt(beta_u / (beta~ M))
    gain = (weight / norms * np.sqrt(scn.beta_u / (scn.beta_tilde * M)))[..., None]
    sd = math.sqrt(noise_mw / (split.phi_s**2 * P * scn.beta_tilde * M))

    def receive(x_blk, gen):
        return _detect(gain * x_blk + complex_normal(gen, x_blk.shape, sd**2), split)

    good = ok[:, None]
    if not jam_only:
        cidx_hat, t_hat = receive(x, rng)
        feat_hat = _feature_of_index(cidx_hat)
        t_reg = tag_symbols(_regenerate(key, feat_hat, feat, tbits))
        L = np.sum(t_hat != t_reg, axis=-1)
        msg_err = cidx_hat != c_idx
        counts.user_sym = int(good.sum()) * K * T
        counts.user_msg_err = int((msg_err & good[..., None]).sum())
        counts.user_tag_err = int(((t_hat != t) & good[..., None]).sum())
        # P_d is P(H1 | H1): only blocks whose ciphertext arrived intact count
        blk_err = np.any(msg_err, axis=-1)
        h1 = good & ~blk_err
        counts.legit_hist = np.bincount(L[h1], minlength=T + 1).astype(np.int64)
        counts.err_hist = np.bincount(L[good & blk_err], minlength=T + 1).astype(np.int64)
        counts.afp_fail = int((((L > eta) | blk_err) & good).sum())

    if jamming or jam_only:
        # random ciphertext and tags through the same link
        jrng = np.random.default_rng(jam_ss)
        cj = QPSK[jrng.integers(0, 4, (n, K, T))]
        tj = 2.0 * jrng.integers(0, 2, (n, K, T)) - 1.0
        cj_idx, tj_hat = receive(split.rho_m * cj + split.rho_t * tj, jrng)
        tj_reg = tag_symbols(generate_tags(key, _feature_of_index(cj_idx)))
        Lj = np.sum(tj_hat != tj_reg, axis=-1)
        counts.jam_hist = np.bincount(Lj[np.broadcast_to(good, Lj.shape)], minlength=T + 1).astype(np.int64)
    if jam_only:
        counts.skipped = int((~ok).sum())
        return counts

    # eavesdroppers: A = G^H W; AN covariance G^H V V^H G = s^2 G^H P_null G
    GH = G.conj().swapaxes(-1, -2)
    A = GH @ W
    an_scale = 1.0 / (cfg.num_an if cfg.an_normalization == "literal" else math.sqrt(cfg.num_an))
    GHH = GH @ H
    cov_an = (GH @ G - GHH @ gram_inv @ GHH.conj().swapaxes(-1, -2)) * an_scale**2
    # AN plus thermal noise per eavesdropper, after dividing row e by sqrt(P alpha_e)
    cov_in = split.phi_n**2 * cov_an + np.diag(noise_mw / (P * scn.alpha_e))
    if combining == "sic":
        # genie cancellation of the other users' streams, then per-eve scaling by A_ee
        diag = np.diagonal(A, axis1=-2, axis2=-1)
        ok_e = ok & np.all(np.abs(diag) > 0, axis=-1)
        comb = np.where(ok_e[:, None], 1.0 / np.where(ok_e[:, None], diag, 1.0), 0.0)[..., None] * np.eye(K)
    elif combining == "right-inverse":
        AH = A.conj().swapaxes(-1, -2)
        AtA = AH @ A
        sva = np.linalg.svd(AtA, compute_uv=False)
        ok_e = ok & (sva[:, -1] > sva[:, 0] / COND_LIMIT)
        comb = np.linalg.solve(np.where(ok_e[:, None, None], AtA, np.eye(K)), AH)
    else:
        raise ValueError(f"unknown combining {combining!r}")
    # combined samples: X + comb (AN + noise) / phi_s, since comb A = I (or its diagonal, for SIC)
    cov_out = comb @ cov_in @ comb.conj().swapaxes(-1, -2) / split.phi_s**2
    Y_t = x + _psd_factor(cov_out) @ complex_normal(rng, (n, K, T))
    Ce_idx, T_e = _detect(Y_t, split)
    S_e = QPSK[Ce_idx] * T_e
    ge = ok_e[:, None, None]
    counts.eve_sym = int(ok_e.sum()) * K * T
    counts.eve_msg_err = int(((Ce_idx != c_idx) & ge).sum())
    tag_err = (T_e != t) & ge
    counts.eve_tag_err = int(tag_err.sum())
    counts.eve_tag_err_per_eve = tag_err.sum(axis=(0, 2)).astype(np.int64)
    counts.eve_plain_err = int(((np.abs(S_e - QPSK[s_idx]) > 1e-9) & ge).sum())
    counts.skipped = int((~ok_e).sum())
    return counts


def run_montecarlo(scn: Scenario, p: PowerAllocation, n_blocks: int, master_seed: int, eta: int | None = None,
                   workers: int = 1, noise_mw: float | None = None, chunk_blocks: int = CHUNK_BLOCKS,
                   combining: str = "right-inverse", jamming: bool = True, jam_only: bool = False) -> TrialReport:
    """Simulate ``n_blocks`` blocks (each: K users, K eavesdroppers, K jamming blocks).

    ``eta`` defaults to the theory-selected threshold; ``noise_mw`` overrides
    the thermal noise power (0 gives the noiseless chain). ``jamming=False``
    skips the jamming blocks; ``jam_only=True`` simulates nothing else.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    cfg = scn.cfg
    if eta is None:
        eta = evaluate(scn, p).eta
    noise = cfg.noise_power_mw if noise_mw is None else noise_mw
    key = KeyMaterial.random(cfg.key_bits, np.random.default_rng(np.random.SeedSequence([master_seed, 2**32])))
    split = p.split()
    sizes = [chunk_blocks] * (n_blocks // chunk_blocks)
    if n_blocks % chunk_blocks:
        sizes.append(n_blocks % chunk_blocks)

    def job(i):
        return _simulate_chunk(scn, split, eta, key, sizes[i], master_seed, i, noise, combining, jamming, jam_only)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    total = Counts(cfg.block_len)
    for part in parts:
        total = total.merge(part)
    return _finish(total, master_seed, scenario_digest(scn), eta)


def roc_sweep(scn: Scenario, p: PowerAllocation, n_blocks: int, seed: int, workers: int = 1) -> np.ndarray:
    """Empirical (eta, P_f, P_d) for eta = 0..T from one simulation pass."""
    return run_montecarlo(scn, p, n_blocks, seed, eta=scn.cfg.block_len, workers=workers).roc()


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    sim: float
    theory: float
    std_err: float
    z: float
    passed: bool


def theory_values(th: SecurityMetrics) -> dict:
    u, e = th.links.user, th.links.eve
    return {"ser_m": u.ser_m, "ser_t": u.ser_t, "ser_m_e": float(np.mean(e.ser_m)),
            "ser_t_e": float(np.mean(e.ser_t)), "p_d": th.p_d, "p_f": th.p_f,
            "leakage": float(np.mean(th.i_e)), "afp": th.afp}


def compare_theory_sim(report: TrialReport, theory: SecurityMetrics, digest: str | None = None,
                       metrics=METRICS, n_sigma: float = 3.0) -> list[ComparisonRow]:
    """Per-metric z-scores of simulation against theory.

    The standard error is the larger of the empirical one and the binomial
    one at the theory value (with a 1/n floor), so zero-count cells against a
    nonzero prediction are not judged with a zero error bar.
    """
    if digest is not None and digest != report.digest:
        raise DigestMismatchError(f"report digest {report.digest} != theory digest {digest}")
    if theory.eta != report.eta:
        raise DigestMismatchError(f"threshold mismatch: report eta={report.eta}, theory eta={theory.eta}")
    tv = theory_values(theory)
    rows = []
    for name in metrics:
        sim, se = report[name]
        th = tv[name]
        n = max(int(report.n_for(name)), 1)
        if name != "leakage":
            se = max(se, math.sqrt(th * (1 - th) / n), 1.0 / n)
        diff = sim - th
        z = 0.0 if diff == 0 else (diff / se if se > 0 else math.inf)
        rows.append(ComparisonRow(name, sim, th, se, z, abs(z) <= n_sigma))
    return rows


def jam_false_alarm(scn: Scenario, p: PowerAllocation, n_blocks: int, seed: int, eta: int | None = None,
                    workers: int = 1) -> tuple[float, float]:
    """Empirical P_f (estimate, std err) from jamming blocks."""
    return run_montecarlo(scn, p, n_blocks, seed, eta=eta, workers=workers, jam_only=True)["p_f"]
