"""Closed-form SINRs, SERs, authentication probabilities and secrecy metrics.

Everything here is a pure function of the system configuration, the
deployment (through large-scale gains and LoS correlations) and the power
allocation ``p = (rho, phi)`` with ``rho = rho_m**2`` and ``phi = phi_s**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import erfc, gammaln

from .channel import GeometryScenario, large_scale_gains, los_correlation, los_matrices
from .config import SystemConfig

LOG2 = math.log(2.0)


class InfeasibleThresholdError(ValueError):
    """No threshold meets the false-alarm budget."""


@dataclass(frozen=True)
class PowerAllocation:
    rho: float
    phi: float

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0 and 0.0 < self.phi <= 1.0):
            raise ValueError(f"power allocation ({self.rho}, {self.phi}) outside (0, 1]^2")

    @property
    def rho_m(self) -> float:
        return math.sqrt(self.rho)

    @property
    def rho_t(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.rho))

    @property
    def phi_s(self) -> float:
        return math.sqrt(self.phi)

    @property
    def phi_n(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.phi))

    def split(self):
        from .tbe import PowerSplit

        return PowerSplit(self.rho_m, self.rho_t, self.phi_s, self.phi_n)

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.phi])


@dataclass(frozen=True)
class Scenario:
    """A configuration plus a fixed deployment, with the derived gains."""

    cfg: SystemConfig
    geometry: GeometryScenario
    beta_u: np.ndarray = field(init=False)
    alpha_e: np.ndarray = field(init=False)
    beta_tilde: float = field(init=False)
    gamma_e: np.ndarray = field(init=False)

    def __post_init__(self):
        beta, alpha, bt = large_scale_gains(self.cfg, self.geometry)
        h_los, g_los = los_matrices(self.cfg, self.geometry)
        object.__setattr__(self, "beta_u", beta)
        object.__setattr__(self, "alpha_e", alpha)
        object.__setattr__(self, "beta_tilde", bt)
        object.__setattr__(self, "gamma_e", los_correlation(h_los, g_los))

    def with_eves(self, angle_offset_deg: float, eve_height: float) -> "Scenario":
        cfg = self.cfg.replace(angle_offset_deg=angle_offset_deg, eve_height=eve_height)
        return Scenario(cfg, self.geometry.with_eves(cfg, angle_offset_deg, eve_height))


def q_function(x):
    """Upper tail of the standard normal, via erfc."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def q_bound(x):
    """The exponential approximation 0.5 exp(-x^2/2) used in the quasi-convexity arguments."""
    return 0.5 * np.exp(-np.square(x) / 2.0)


def message_ser(rho_m, rho_t, sigma):
    """QPSK SER with a +/-rho_t real-axis tag superimposed (per-quadrature std sigma)."""
    a = rho_m / math.sqrt(2.0)
    return 1.0 - 0.5 * (q_function(-(a + rho_t) / sigma) + q_function(-(a - rho_t) / sigma)) * q_function(-a / sigma)


def tag_ser(rho_m, rho_t, sigma, simplified: bool = False):
    """Tag SER after removing the detected message from the residual."""
    if simplified:
        return q_function(rho_t / sigma)
    a = rho_m / math.sqrt(2.0)
    b = rho_t
    s2 = math.sqrt(2.0) * rho_m
    q = q_function
    return 0.5 * (q(b / sigma) - q((a + b) / sigma) + q((s2 + b) / sigma)
                  + q((a - b) / sigma) - q((s2 - b) / sigma) + q(b / sigma))


@dataclass(frozen=True)
class UserLinkMetrics:
    sinr_m: float
    sinr_t: float
    sigma_u: float
    ser_m: float
    ser_t: float


@dataclass(frozen=True)
class EveLinkMetrics:
    """Per-eavesdropper arrays (length K)."""

    sinr_m: np.ndarray
    sinr_t: np.ndarray
    sigma_e: np.ndarray
    ser_m: np.ndarray
    ser_t: np.ndarray
    f_kappa: np.ndarray
    g_kappa: np.ndarray
    gamma_e: np.ndarray


@dataclass(frozen=True)
class LinkMetrics:
    user: UserLinkMetrics
    eve: EveLinkMetrics


def ue_metrics(cfg: SystemConfig, beta_tilde: float, p: PowerAllocation, simplified_tag: bool = False,
               ) -> UserLinkMetrics:
    M = cfg.num_antennas
    noise = cfg.noise_power_mw / (cfg.tx_power_mw * beta_tilde)
    rho, phi = p.rho, p.phi
    sigma = math.sqrt(noise / (2 * M * phi))
    if sigma <= 0:
        raise ValueError("degenerate noise: sigma_u = 0")
    sinr_m = phi * rho * M / (phi * (1 - rho) * M + noise)
    sinr_t = 2 * phi * (1 - rho) * M / noise
    return UserLinkMetrics(sinr_m, sinr_t, sigma, float(message_ser(p.rho_m, p.rho_t, sigma)),
                           float(tag_ser(p.rho_m, p.rho_t, sigma, simplified_tag)))


def f_kappa(kappa: float, gamma, M: int):
    """Normalized mean wiretap gain |h_u^H g_e|^2 / M (LoS plus scatter terms)."""
    gamma = np.asarray(gamma, dtype=float)
    if math.isinf(kappa):
        return gamma**2 / M
    k1 = kappa + 1.0
    return kappa**2 * gamma**2 / (M * k1**2) + 2 * kappa / k1**2 + 1 / k1**2


def g_kappa(kappa: float, gamma, M: int, variant: str = "printed"):
    """Artificial-noise power leaking to an eavesdropper (unit total AN power).

    ``"printed"`` divides the scatter term by M as in the closed form;
    ``"rederived"`` keeps it at ``2/(kappa+1)``, which is what a null-space
    projection of the CN(0, 2I) channel difference actually gives.
    """
    gamma = np.asarray(gamma, dtype=float)
    los = 0.0 if math.isinf(kappa) else kappa / (kappa + 1.0)
    scat = 0.0 if math.isinf(kappa) else 2.0 / (kappa + 1.0)
    if math.isinf(kappa):
        los = 1.0
    if variant == "printed":
        return (los * (2 * M - 2 * gamma) + scat) / M
    if variant == "rederived":
        return los * (2 * M - 2 * gamma) / M + scat
    raise ValueError(f"unknown g(kappa) variant {variant!r}")


def projected_an_leakage(cfg: SystemConfig, h_los, g_los):
    """AN power reaching each eavesdropper through the actual null-space projector.

    Splits ``g_LoS = H_LoS c + r`` with ``r`` orthogonal to the users' LoS
    responses; to first order in 1/kappa,
    ``E[g^H P_null g] = kappa/(kappa+1) |r|^2 + N_AN (1 + |c|^2)/(kappa+1)``,
    scaled by the per-vector AN power of the configured normalization.
    """
    M, K = h_los.shape
    n_an = M - K
    c, *_ = np.linalg.lstsq(h_los, g_los, rcond=None)
    r = g_los - h_los @ c
    kappa = cfg.kappa
    if math.isinf(kappa):
        raw = np.sum(np.abs(r) ** 2, axis=0)
    else:
        raw = (kappa * np.sum(np.abs(r) ** 2, axis=0) + n_an * (1 + np.sum(np.abs(c) ** 2, axis=0))) / (kappa + 1)
    scale2 = 1.0 / n_an**2 if cfg.an_normalization == "literal" else 1.0 / n_an
    return raw * scale2


def eve_metrics(cfg: SystemConfig, beta_u, alpha_e, gamma_e, beta_tilde: float, p: PowerAllocation,
                g_variant: str = "printed", simplified_tag: bool = False, an_leak=None) -> EveLinkMetrics:
    """Eavesdropper SINRs and SERs; eve e is paired with user e.

    ``an_leak`` replaces g(kappa) by explicit per-eve AN powers (see
    :func:`projected_an_leakage`).
    """
    M = cfg.num_antennas
    beta_u = np.asarray(beta_u, dtype=float)
    alpha_e = np.asarray(alpha_e, dtype=float)
    fk = f_kappa(cfg.kappa, gamma_e, M)
    gk = g_kappa(cfg.kappa, gamma_e, M, g_variant) if an_leak is None else np.asarray(an_leak, dtype=float)
    gain = beta_tilde / beta_u * fk
    noise = cfg.noise_power_mw / (cfg.tx_power_mw * alpha_e) + (1 - p.phi) * gk
    rho, phi = p.rho, p.phi
    sinr_m = phi * rho * gain / (phi * (1 - rho) * gain + noise)
    sinr_t = phi * (1 - rho) * gain / noise
    with np.errstate(divide="ignore"):
        sigma = np.sqrt(noise / (2 * phi * gain))
    dead = ~np.isfinite(sigma) | (gain <= 0)
    sigma_safe = np.where(dead, 1.0, sigma)
    ser_m = np.where(dead, 0.75, message_ser(p.rho_m, p.rho_t, sigma_safe))
    ser_t = np.where(dead, 0.5, tag_ser(p.rho_m, p.rho_t, sigma_safe, simplified_tag))
    return EveLinkMetrics(sinr_m, sinr_t, sigma, ser_m, ser_t, fk, gk, np.asarray(gamma_e, dtype=float))


# -- binomial machinery ------------------------------------------------------

@lru_cache(maxsize=32)
def _log_comb(T: int) -> np.ndarray:
    z = np.arange(T + 1)
    out = gammaln(T + 1) - gammaln(z + 1) - gammaln(T - z + 1)
    out.flags.writeable = False
    return out


def _log_binom_pmf(T: int, p: float) -> np.ndarray:
    z = np.arange(T + 1)
    logc = _log_comb(T)
    if p <= 0.0:
        return np.where(z == 0, 0.0, -np.inf)
    if p >= 1.0:
        return np.where(z == T, 0.0, -np.inf)
    return logc + z * math.log(p) + (T - z) * math.log1p(-p)


def binom_cdf_all(T: int, p: float) -> np.ndarray:
    """P(Bin(T, p) <= eta) for eta = 0..T, accumulated in log space."""
    cdf = np.exp(np.logaddexp.accumulate(_log_binom_pmf(T, p)))
    return np.minimum(cdf, 1.0)


def binom_cdf(T: int, p: float, eta: int) -> float:
    return float(binom_cdf_all(T, p)[eta])


def sign_flip_probability(ser_m: float, T: int) -> float:
    """P_b: at least one slot flipped to the opposite point and no other errors."""
    ok = 1.0 - ser_m
    if ok <= 0.0:
        return 0.0
    # per-quadrature error probability; the opposite point needs both quadratures wrong
    flip = -math.expm1(0.5 * math.log1p(-ser_m))
    z = np.arange(1, T + 1)
    logc = _log_comb(T)[1:]
    with np.errstate(divide="ignore"):
        terms = logc + (T - z) * math.log1p(-ser_m) + 2 * z * (math.log(flip) if flip > 0 else -np.inf)
    if np.all(np.isneginf(terms)):
        return 0.0
    return float(np.exp(np.logaddexp.reduce(terms)))


def false_alarm_all(T: int, p_t: float, p_b: float) -> np.ndarray:
    """P_f(eta) for eta = 0..T."""
    base = _fair_cdf(T)
    if p_b == 0.0:
        return base.copy()
    return (1 - p_b) * base + p_b * binom_cdf_all(T, p_t)


@lru_cache(maxsize=32)
def _fair_cdf(T: int) -> np.ndarray:
    out = binom_cdf_all(T, 0.5)
    out.flags.writeable = False
    return out


def auth_probabilities(p_t: float, p_m: float, T: int, eta: int, prior: bool = False):
    """(P_d, P_f, P_b) at threshold ``eta``; ``prior=True`` forces P_b = 0."""
    p_b = 0.0 if prior else sign_flip_probability(p_m, T)
    p_d = binom_cdf(T, p_t, eta)
    p_f = float(false_alarm_all(T, p_t, p_b)[eta])
    return p_d, p_f, p_b


def select_threshold(T: int, pf_target: float, p_b: float = 0.0, p_t: float = 0.5) -> int:
    """Largest eta whose false-alarm probability stays within ``pf_target``."""
    if pf_target >= 1.0:
        return T
    pf = false_alarm_all(T, p_t, p_b)
    ok = np.nonzero(pf <= pf_target * (1 + 1e-12))[0]
    if len(ok) == 0:
        raise InfeasibleThresholdError(f"P_f target {pf_target} below P_f(0) = {pf[0]:.3g}")
    return int(ok[-1])


# -- rates and reliability -----------------------------------------------------

def info_ratio(ser_t_e):
    """Wiretap information ratio 1 + log2(1 - P'_t), clipped to [0, 1]."""
    ser_t_e = np.asarray(ser_t_e, dtype=float)
    with np.errstate(divide="ignore"):
        raw = 1.0 + np.log2(1.0 - ser_t_e)
    return np.clip(np.nan_to_num(raw, neginf=0.0), 0.0, 1.0)


def secrecy_rates(user: UserLinkMetrics, eve: EveLinkMetrics, p_d, i_e, K: int | None = None):
    """(R, R_U, R_E, R_sec) in bits/s/Hz summed over user/eve pairs."""
    cu = math.log2(1 + user.sinr_m)
    ce = np.log2(1 + np.asarray(eve.sinr_m))
    K = len(ce) if K is None else K
    p_d = np.broadcast_to(np.asarray(p_d, dtype=float), ce.shape)
    i_e = np.asarray(i_e, dtype=float)
    r_classic = float(np.sum(np.maximum(cu - ce, 0.0)))
    r_u = float(np.sum(cu * p_d))
    r_e = float(np.sum(ce * i_e))
    r_sec = float(np.sum(np.maximum(cu * p_d - ce * i_e, 0.0)))
    return r_classic, r_u, r_e, r_sec


def reliability_metrics(p_m: float, p_d: float, ser_m_e, ser_t_e, T: int):
    """(BLER, AFP, P_w)."""
    bler = 1.0 - (1.0 - p_m) ** T
    afp = 1.0 - (1.0 - bler) * p_d
    p_w = 1.0 - float(np.mean((1 - np.asarray(ser_m_e)) * (1 - np.asarray(ser_t_e))))
    return bler, afp, p_w


@dataclass(frozen=True)
class SecurityMetrics:
    p_d: float
    p_f: float
    p_b: float
    eta: int
    i_e: np.ndarray
    r_classic: float
    r_u: float
    r_e: float
    r_sec: float
    r_baseline: float
    bler: float
    afp: float
    p_w: float
    p_w_baseline: float
    links: LinkMetrics


def evaluate(scn: Scenario, p: PowerAllocation, eta: int | None = None, g_variant: str = "printed",
             simplified_tag: bool = False) -> SecurityMetrics:
    """Full metric bundle; ``eta`` defaults to the false-alarm-constrained threshold.

    ``g_variant`` selects the AN leakage model: ``"printed"`` (default),
    ``"rederived"`` or ``"projected"``.
    """
    cfg = scn.cfg
    T = cfg.block_len
    user = ue_metrics(cfg, scn.beta_tilde, p, simplified_tag)
    leak = None
    if g_variant == "projected":
        leak = projected_an_leakage(cfg, *los_matrices(cfg, scn.geometry))
        g_variant = "printed"
    eve = eve_metrics(cfg, scn.beta_u, scn.alpha_e, scn.gamma_e, scn.beta_tilde, p, g_variant, simplified_tag,
                      an_leak=leak)
    p_b = sign_flip_probability(user.ser_m, T)
    if eta is None:
        eta = select_threshold(T, cfg.pf_target, p_b, user.ser_t)
    p_d = binom_cdf(T, user.ser_t, eta)
    p_f = float(false_alarm_all(T, user.ser_t, p_b)[eta])
    i_e = info_ratio(eve.ser_t)
    r, r_u, r_e, r_sec = secrecy_rates(user, eve, p_d, i_e)
    r_base = baseline_rate(user, eve, p_d)
    bler, afp, p_w = reliability_metrics(user.ser_m, p_d, eve.ser_m, eve.ser_t, T)
    p_w_base = 1.0 - float(np.mean(1 - eve.ser_m))
    return SecurityMetrics(p_d, p_f, p_b, eta, i_e, r, r_u, r_e, r_sec, r_base, bler, afp, p_w, p_w_base,
                           LinkMetrics(user, eve))


def baseline_rate(user: UserLinkMetrics, eve: EveLinkMetrics, p_d: float) -> float:
    """Secrecy rate without tag-based encoding: the eavesdropper's rate is not discounted."""
    cu = math.log2(1 + user.sinr_m)
    ce = np.log2(1 + np.asarray(eve.sinr_m))
    return float(np.sum(np.maximum(cu * p_d - ce, 0.0)))
