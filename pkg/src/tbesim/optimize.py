"""Power-allocation solvers: DCA for the secrecy rate and the constrained AFP search.

Objectives are closures ``f(rho, phi) -> float`` over the closed-form
metrics of :mod:`tbesim.theory`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .theory import PowerAllocation, Scenario, evaluate

RHO_RANGE = (0.9, 1.0)
PHI_MIN = 1e-3
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class NonFiniteMetricError(FloatingPointError):
    """An objective returned NaN/inf during an iteration."""

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


def metric_function(scn: Scenario, name: str, **kw):
    """``f(rho, phi)`` returning one field of :class:`SecurityMetrics`.

    ``"r_sec_dc"`` is the unclipped difference R_U - R_E the DC program works on.
    """

    def f(rho, phi):
        m = evaluate(scn, PowerAllocation(float(rho), float(phi)), **kw)
        if name == "r_sec_dc":
            return m.r_u - m.r_e
        return float(getattr(m, name))

    return f


def numeric_gradient(f, p, h: float = 1e-6, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> np.ndarray:
    """Gradient of ``f(rho, phi)`` by central differences, one-sided at the box edges."""
    p = np.asarray(p.as_array() if isinstance(p, PowerAllocation) else p, dtype=float)
    grad = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        up_ok = p[i] + h <= hi[i]
        dn_ok = p[i] - h > lo[i]
        if up_ok and dn_ok:
            grad[i] = (f(*(p + e)) - f(*(p - e))) / (2 * h)
        elif dn_ok:
            grad[i] = (f(*p) - f(*(p - e))) / h
        else:
            grad[i] = (f(*(p + e)) - f(*p)) / h
    return grad


# -- Algorithm 1: DCA ---------------------------------------------------------------

@dataclass
class DcaState:
    iteration: int
    p: np.ndarray
    q: np.ndarray
    max_iter: int = 100
    tol: float = 1e-6
    history: list = field(default_factory=list)


@dataclass(frozen=True)
class DcaResult:
    p: PowerAllocation
    r_sec: float
    r_sec_dc: float
    iterations: int
    converged: bool
    start: tuple
    history: tuple


def _project(p, lo, hi):
    return np.minimum(np.maximum(p, lo), hi)


def _pgd(obj, x0, lo, hi, tol=1e-8, max_iter=500, h=1e-7):
    """Projected gradient descent with Armijo backtracking on a box."""
    x = _project(np.asarray(x0, dtype=float), lo, hi)
    fx = obj(x)
    scale = hi - lo
    for _ in range(max_iter):
        g = numeric_gradient(lambda a, b: obj(np.array([a, b])), x, h, lo - 1.0, hi)
        # precondition by the box widths so rho (width 0.1) and phi (width 1) move alike
        d = -g * scale**2
        step = 1.0
        moved = False
        while step > 1e-12:
            xn = _project(x + step * d, lo, hi)
            fn = obj(xn)
            if fn < fx and fn <= fx + 1e-4 * np.dot(g, xn - x):
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        dx = np.linalg.norm((xn - x) / scale)
        x, fx = xn, fn
        if dx <= tol:
            break
    return x, fx


def _lbfgsb(obj, x0, lo, hi, tol=1e-8):
    """Bounded quasi-Newton solve of the convexified subproblem."""
    res = minimize(obj, x0, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                   options={"ftol": tol, "gtol": tol, "eps": 1e-8, "maxiter": 200})
    return np.asarray(res.x), float(res.fun)


def dca_maximize_rsec(scn: Scenario, p0=(1.0, 1.0), tol: float = 1e-6, max_iter: int = 100,
                      rho_range=RHO_RANGE, phi_min: float = PHI_MIN, grad_step: float = 1e-6,
                      inner: str = "lbfgsb") -> DcaResult:
    """Algorithm 1: linearize R_E at p^k and maximize R_U(p) - <grad R_E, p> on the box.

    ``inner`` picks the subproblem solver: bounded L-BFGS-B (default) or
    plain projected gradient with backtracking (``"pgd"``).
    """
    solve = {"lbfgsb": _lbfgsb, "pgd": _pgd}[inner]
    r_u = metric_function(scn, "r_u")
    r_e = metric_function(scn, "r_e")
    lo = np.array([rho_range[0], phi_min])
    hi = np.array([rho_range[1], 1.0])
    p = _project(np.asarray(p0, dtype=float), lo, hi)
    dc = r_u(*p) - r_e(*p)
    state = DcaState(0, p, np.zeros(2), max_iter, tol)
    converged = False
    for it in range(1, max_iter + 1):
        q = -numeric_gradient(r_e, p, grad_step, lo - 1.0, hi)
        if not np.all(np.isfinite(q)):
            raise NonFiniteMetricError("non-finite gradient of R_E", state.history)
        state.q = q

        def sub(x, p_k=p, q_k=q):
            return -r_u(*x) - np.dot(x - p_k, q_k)

        p_new, _ = solve(sub, p, lo, hi)
        dc_new = r_u(*p_new) - r_e(*p_new)
        if not math.isfinite(dc_new):
            raise NonFiniteMetricError("non-finite objective", state.history)
        state.history.append((it, p_new.copy(), dc_new))
        step = np.linalg.norm(p_new - p)
        if dc_new < dc:  # keep the DC objective monotone
            converged = True
            break
        p, dc = p_new, dc_new
        state.iteration = it
        state.p = p
        if step <= tol:
            converged = True
            break
    pa = PowerAllocation(*p)
    return DcaResult(pa, evaluate(scn, pa).r_sec, dc, state.iteration, converged, tuple(p0),
                     tuple(state.history))


def grid_search(f, rho_grid, phi_grid, maximize: bool = True):
    """Dense-grid oracle: returns (best rho, best phi, best value, value matrix)."""
    vals = np.array([[f(r, ph) for ph in phi_grid] for r in rho_grid])
    flat = np.nanargmax(vals) if maximize else np.nanargmin(vals)
    i, j = np.unravel_index(flat, vals.shape)
    return float(rho_grid[i]), float(phi_grid[j]), float(vals[i, j]), vals


def _grid_peaks(vals, k: int = 2):
    """Indices of up to ``k`` strict local maxima (4-neighbourhood), best first."""
    peaks = []
    n, m = vals.shape
    for i in range(n):
        for j in range(m):
            v = vals[i, j]
            nb = [vals[a, b] for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)) if 0 <= a < n and 0 <= b < m]
            if all(v >= w for w in nb):
                peaks.append((v, i, j))
    peaks.sort(reverse=True)
    return [(i, j) for _, i, j in peaks[:k]]


def dca_multistart(scn: Scenario, coarse: int = 21, rho_range=RHO_RANGE, phi_min: float = PHI_MIN,
                   **kw) -> DcaResult:
    """DCA from the printed start [1, 1] and from the (up to two) coarse-grid peaks; best R_sec wins."""
    rho_g = np.linspace(rho_range[0], rho_range[1], coarse)
    phi_g = np.linspace(phi_min, 1.0, coarse)
    _, _, _, vals = grid_search(metric_function(scn, "r_sec"), rho_g, phi_g)
    starts = [(1.0, 1.0)] + [(rho_g[i], phi_g[j]) for i, j in _grid_peaks(vals)]
    results = [dca_maximize_rsec(scn, s, rho_range=rho_range, phi_min=phi_min, **kw) for s in starts]
    return max(results, key=lambda r: r.r_sec)


def maximize_metric(scn: Scenario, name: str, coarse: int = 41, rho_range=RHO_RANGE,
                    phi_min: float = PHI_MIN, **kw) -> tuple[PowerAllocation, float]:
    """Coarse grid, then bounded L-BFGS-B polish from the two best grid peaks.

    Used for objectives without a DC split, e.g. the baseline rate ``"r_baseline"``.
    """
    f = metric_function(scn, name, **kw)
    rho_g = np.linspace(rho_range[0], rho_range[1], coarse)
    phi_g = np.linspace(phi_min, 1.0, coarse)
    _, _, best, vals = grid_search(f, rho_g, phi_g)
    lo = np.array([rho_range[0], phi_min])
    hi = np.array([rho_range[1], 1.0])
    i, j = np.unravel_index(np.nanargmax(vals), vals.shape)
    best_p = np.array([rho_g[i], phi_g[j]])
    for i, j in _grid_peaks(vals):
        x, fx = _lbfgsb(lambda x: -f(*x), np.array([rho_g[i], phi_g[j]]), lo, hi)
        if -fx > best:
            best, best_p = -fx, x
    return PowerAllocation(*best_p), float(best)


# -- Algorithm 2 ---------------------------------------------------------------------

def bisection_rho(objective, lo: float = RHO_RANGE[0], hi: float = RHO_RANGE[1], eps: float = 1e-4,
                  mode: str = "golden", rng: np.random.Generator | None = None, fallback_points: int = 10001):
    """Bracket-shrinking minimization of a unimodal 1-D objective; returns the final midpoint.

    ``mode="golden"`` places the two probes at the golden-section points;
    ``mode="random"`` draws ``rho1 < rho2`` uniformly inside the bracket. If
    the four bracket values show an interior peak, the objective is not
    unimodal: warn and fall back to a dense grid.
    """
    if mode not in ("golden", "random"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "random" and rng is None:
        rng = np.random.default_rng(0)
    a, b = lo, hi
    fa, fb = objective(a), objective(b)
    while b - a > eps:
        if mode == "golden":
            x1 = b - GOLDEN * (b - a)
            x2 = a + GOLDEN * (b - a)
        else:
            x1, x2 = np.sort(rng.uniform(a, b, 2))
        f1, f2 = objective(x1), objective(x2)
        if f1 > max(fa, f2) + 1e-15 or f2 > max(f1, fb) + 1e-15:
            warnings.warn("objective is not unimodal on the bracket; falling back to grid search",
                          RuntimeWarning, stacklevel=2)
            grid = np.linspace(lo, hi, fallback_points)
            vals = np.array([objective(x) for x in grid])
            return float(grid[int(np.argmin(vals))])
        if f1 <= f2:
            b, fb = x2, f2
        else:
            a, fa = x1, f1
    return 0.5 * (a + b)


def invert_constraint_phi(constraint, target: float, increasing: bool, phi_min: float = PHI_MIN,
                          xtol: float = 1e-10):
    """Root of ``constraint(phi) = target`` on [phi_min, 1]; None when unreachable.

    ``increasing`` states the monotone direction in phi. A target met at both
    ends is resolved toward the end that keeps the constraint satisfied
    with the most signal power.
    """
    c_lo, c_hi = constraint(phi_min), constraint(1.0)
    if abs(c_hi - target) <= 1e-15:
        return 1.0
    lo_v, hi_v = (c_lo, c_hi) if increasing else (c_hi, c_lo)
    if target < lo_v - 1e-15 or target > hi_v + 1e-15:
        return None
    if (c_lo - target) * (c_hi - target) > 0:
        return None
    return float(brentq(lambda ph: constraint(ph) - target, phi_min, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps))


@dataclass(frozen=True)
class ConstraintSpec:
    pw_min: float
    pd_min: float
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        if not (0 < self.pw_min < 1 and 0 < self.pd_min < 1):
            raise ValueError("constraint thresholds must lie in (0, 1)")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("KKT multipliers must be non-negative")


@dataclass(frozen=True)
class AfpSolution:
    p: PowerAllocation | None
    case: int | None  # 1-4, None when infeasible
    afp: float
    p_d: float
    p_w: float
    feasible: bool


def solve_constrained_afp(scn: Scenario, spec: ConstraintSpec, scheme: str = "tbe", rho_range=RHO_RANGE,
                          phi_min: float = PHI_MIN, grid_points: int = 201, eps: float = 1e-6) -> AfpSolution:
    """Minimize AFP s.t. P_w >= P_w0 and P_d >= P_d0.

    Case 1: phi = 1 and rho by :func:`bisection_rho`; kept if both constraints
    hold. Otherwise, for each rho the best phi is the largest one meeting the
    secrecy constraint (AFP falls with phi), ``phi_w(rho) = P_w^-1(P_w0 | rho)``
    capped at 1; the authentication constraint then bounds the feasible
    rho-interval. The case label is the active set at the optimum:
    2 secrecy only, 3 authentication only, 4 both.
    """
    if scheme not in ("tbe", "baseline"):
        raise ValueError(f"unknown scheme {scheme!r}")
    pw_name = "p_w" if scheme == "tbe" else "p_w_baseline"

    def metrics(rho, phi):
        return evaluate(scn, PowerAllocation(rho, phi))

    def pw(rho, phi):
        return getattr(metrics(rho, phi), pw_name)

    def afp1(rho):
        return metrics(rho, 1.0).afp

    rho1 = bisection_rho(afp1, *rho_range, eps=eps)
    m1 = metrics(rho1, 1.0)
    if getattr(m1, pw_name) >= spec.pw_min and m1.p_d >= spec.pd_min:
        return AfpSolution(PowerAllocation(rho1, 1.0), 1, m1.afp, m1.p_d, getattr(m1, pw_name), True)

    def phi_w(rho):
        if pw(rho, 1.0) >= spec.pw_min:
            return 1.0
        return invert_constraint_phi(lambda ph: pw(rho, ph), spec.pw_min, increasing=False, phi_min=phi_min)

    def best_at(rho):
        """(afp, phi) at the best feasible phi for this rho, or (1, None)."""
        ph = phi_w(rho)
        if ph is None:
            return 1.0, None
        m = metrics(rho, ph)
        if m.p_d < spec.pd_min:
            return 1.0, None
        return m.afp, ph

    grid = np.linspace(rho_range[0], rho_range[1], grid_points)
    vals = [best_at(r) for r in grid]
    feas = np.array([ph is not None for _, ph in vals])
    if not feas.any():
        return AfpSolution(None, None, 1.0, float("nan"), float("nan"), False)
    afps = np.array([v for v, _ in vals])
    afps[~feas] = np.inf
    k = int(np.argmin(afps))

    # refine inside the neighbouring grid cells; feasibility edges are found by bisection
    def feasible(r):
        return best_at(r)[1] is not None

    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid_points - 1)]
    if not feasible(a):
        a = _edge(feasible, a, grid[k])
    if not feasible(b):
        b = _edge(feasible, b, grid[k])
    rho_s = bisection_rho(lambda r: best_at(r)[0], a, b, eps=eps) if b - a > eps else 0.5 * (a + b)
    cands = [rho_s, a, b, grid[k]]
    best = min((best_at(r)[0], r) for r in cands if feasible(r))
    rho_s = best[1]
    phi_s = best_at(rho_s)[1]
    m = metrics(rho_s, phi_s)
    sec_active = phi_s < 1.0
    auth_active = m.p_d - spec.pd_min <= 1e-6
    if sec_active and auth_active:
        case = 4
    elif sec_active:
        case = 2
    else:
        case = 3
    return AfpSolution(PowerAllocation(rho_s, phi_s), case, m.afp, m.p_d, getattr(m, pw_name), True)


def _edge(pred, bad: float, good: float, tol: float = 1e-10) -> float:
    """Bisection for the boundary between a failing and a passing point; returns the passing side."""
    while abs(good - bad) > tol:
        mid = 0.5 * (good + bad)
        if pred(mid):
            good = mid
        else:
            bad = mid
    return good


# -- Appendix probes -------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeReport:
    kind: str  # "unimodal-up", "unimodal-down", "monotone", "constant", "multimodal"
    sign_changes: int
    violations: tuple


def unimodality_probe(values, deadband: float | None = None) -> ShapeReport:
    """Shape of a sampled 1-D slice from the signs of its successive differences.

    Differences within ``deadband`` (default 1e-9 of the value range) are
    treated as flat.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        raise ValueError("need at least 3 samples")
    d = np.diff(v)
    if deadband is None:
        span = np.nanmax(v) - np.nanmin(v)
        deadband = 1e-9 * max(span, np.finfo(float).tiny)
    sig = np.where(d > deadband, 1, np.where(d < -deadband, -1, 0))
    idx = np.nonzero(sig)[0]
    if len(idx) == 0:
        return ShapeReport("constant", 0, ())
    s = sig[idx]
    change = np.nonzero(s[1:] != s[:-1])[0]
    where = tuple(int(idx[i + 1]) for i in change)
    n = len(change)
    if n == 0:
        kind = "monotone"
    elif n == 1:
        kind = "unimodal-up" if s[0] > 0 else "unimodal-down"
    else:
        kind = "multimodal"
    return ShapeReport(kind, n, where if n > 1 else ())
