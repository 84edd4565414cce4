"""UAV geometry, path loss, Rician channels, ZF precoding and null-space AN."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

# users closer than this in elevation make H rank deficient under pure LoS
ANGLE_COLLISION_RAD = 1e-6


def path_loss_db(distance, carrier_ghz):
    """Urban-micro path loss ``32.4 + 21 lg d + 20 lg f_c`` in dB."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    if not 0.5 < carrier_ghz < 100:
        raise ValueError(f"carrier frequency {carrier_ghz} GHz outside (0.5, 100)")
    return 32.4 + 21.0 * np.log10(distance) + 20.0 * math.log10(carrier_ghz)


def path_loss_beta(distance, carrier_ghz, convention: str = "literal"):
    """Large-scale gain from the urban-micro path loss.

    ``convention="literal"`` returns ``1/PL`` with PL taken as the dB-valued
    expression itself; ``"db"`` returns the usual ``10**(-PL/10)``.
    """
    pl = path_loss_db(distance, carrier_ghz)
    if convention == "literal":
        out = 1.0 / pl
    elif convention == "db":
        out = 10.0 ** (-pl / 10.0)
    else:
        raise ValueError(f"unknown path-loss convention {convention!r}")
    return float(out) if np.ndim(out) == 0 else out


def steering_vector(elevation, num_antennas: int, spacing: float, wavelength: float):
    """ULA response ``exp(-j 2pi d_s/lambda m sin(theta))``, m = 0..M-1.

    ``elevation`` may be an array; the antenna index is the last axis.
    """
    if num_antennas < 1:
        raise ValueError("num_antennas must be >= 1")
    m = np.arange(num_antennas)
    phase = -2j * np.pi * spacing / wavelength * np.sin(np.asarray(elevation, dtype=float))[..., None] * m
    return np.exp(phase)


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0):
    """Circularly symmetric complex Gaussian samples with variance ``var``."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    z = rng.standard_normal(shape + (2,)).view(np.complex128)[..., 0]
    z *= math.sqrt(var / 2.0)
    return z


def rician_mix(los, nlos, kappa: float):
    if math.isinf(kappa):
        return np.asarray(los, dtype=complex)
    return math.sqrt(kappa / (kappa + 1.0)) * los + math.sqrt(1.0 / (kappa + 1.0)) * nlos


def draw_channel(elevation: float, kappa: float, num_antennas: int, rng: np.random.Generator,
                 spacing: float = 0.5, wavelength: float = 1.0):
    """One Rician channel vector: LoS steering vector plus CN(0, I) scatter."""
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    los = steering_vector(elevation, num_antennas, spacing, wavelength)
    if math.isinf(kappa):
        return los.astype(complex)
    return rician_mix(los, complex_normal(rng, num_antennas), kappa)


@dataclass(frozen=True)
class GeometryScenario:
    """Fixed deployment of K users and their paired eavesdroppers."""

    ue_horiz_dists: np.ndarray
    ue_elevations: np.ndarray
    eve_elevations: np.ndarray
    ue_dists: np.ndarray
    eve_dists: np.ndarray

    @property
    def num_users(self) -> int:
        return len(self.ue_elevations)

    @classmethod
    def from_horizontal(cls, cfg: SystemConfig, horiz, angle_offset_deg: float | None = None,
                        eve_height: float | None = None) -> "GeometryScenario":
        horiz = np.asarray(horiz, dtype=float)
        if horiz.shape != (cfg.num_users,):
            raise ValueError(f"expected {cfg.num_users} horizontal distances, got shape {horiz.shape}")
        dtheta = math.radians(cfg.angle_offset_deg if angle_offset_deg is None else angle_offset_deg)
        h_eve = cfg.eve_height if eve_height is None else eve_height
        theta = np.arctan2(cfg.ue_height, horiz)
        ue_d = np.hypot(horiz, cfg.ue_height)
        vartheta = theta + dtheta
        eve_d = h_eve / np.sin(vartheta)
        if np.any(eve_d <= 0):
            raise ValueError("eavesdropper elevation must stay in (0, pi)")
        return cls(horiz, theta, vartheta, ue_d, eve_d)

    def with_eves(self, cfg: SystemConfig, angle_offset_deg: float, eve_height: float) -> "GeometryScenario":
        """Same users, eavesdroppers moved to a new height / angle offset."""
        return GeometryScenario.from_horizontal(cfg, self.ue_horiz_dists, angle_offset_deg, eve_height)


def _snap_to_beams(cfg: SystemConfig, horiz):
    """Move each user to the nearest DFT beam direction of the array.

    Beam directions are spaced ``lambda/(M d_s)`` apart in ``sin(theta)``;
    users on distinct beams have exactly orthogonal LoS responses.
    Returns None when two users land on the same beam or a snapped user
    leaves the horizontal range.
    """
    step = cfg.wavelength / (cfg.num_antennas * cfg.spacing)
    s = np.sin(np.arctan2(cfg.ue_height, horiz))
    s = np.round(s / step) * step
    if len(np.unique(np.round(s / step))) < len(s) or np.any(s >= 1.0) or np.any(s <= 0.0):
        return None
    new = cfg.ue_height / np.tan(np.arcsin(s))
    lo, hi = cfg.ue_horiz_range
    if np.any(new < lo) or np.any(new > hi):
        return None
    return new


def draw_geometry(cfg: SystemConfig, rng: np.random.Generator, placement: str = "uniform",
                  max_tries: int = 10_000) -> GeometryScenario:
    """Users at horizontal distances uniform on ``ue_horiz_range``.

    ``placement="uniform"`` keeps the draw as is, redrawing deployments with
    two users within ``ANGLE_COLLISION_RAD`` of each other.
    ``placement="orthogonal"`` snaps every user to the nearest DFT beam and
    redraws on collisions, so the ZF gain equals the full array gain.
    """
    if placement not in ("uniform", "orthogonal"):
        raise ValueError(f"unknown placement {placement!r}")
    lo, hi = cfg.ue_horiz_range
    for _ in range(max_tries):
        horiz = rng.uniform(lo, hi, cfg.num_users)
        if placement == "orthogonal":
            horiz = _snap_to_beams(cfg, horiz)
            if horiz is None:
                continue
        geom = GeometryScenario.from_horizontal(cfg, horiz)
        th = np.sort(geom.ue_elevations)
        if cfg.num_users == 1 or np.min(np.diff(th)) > ANGLE_COLLISION_RAD:
            return geom
    raise RuntimeError("could not draw a non-degenerate deployment")


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray
    G: np.ndarray
    beta_u: np.ndarray
    alpha_e: np.ndarray
    beta_tilde: float
    W: np.ndarray
    V: np.ndarray
    gamma_e: np.ndarray

    @property
    def num_an(self) -> int:
        return self.V.shape[-1]


def large_scale_gains(cfg: SystemConfig, geom: GeometryScenario):
    beta = np.asarray(path_loss_beta(geom.ue_dists, cfg.carrier_ghz, cfg.path_loss_convention))
    alpha = np.asarray(path_loss_beta(geom.eve_dists, cfg.carrier_ghz, cfg.path_loss_convention))
    beta_tilde = 1.0 / np.sum(1.0 / beta)
    return beta, alpha, float(beta_tilde)


def los_matrices(cfg: SystemConfig, geom: GeometryScenario):
    """LoS steering matrices (M x K) of the users and of the eavesdroppers."""
    h_los = steering_vector(geom.ue_elevations, cfg.num_antennas, cfg.spacing, cfg.wavelength).T
    g_los = steering_vector(geom.eve_elevations, cfg.num_antennas, cfg.spacing, cfg.wavelength).T
    return h_los, g_los


def los_correlation(h_los, g_los):
    """Gamma_e = |h_{u,LoS}^H g_{e,LoS}| for paired u = e."""
    return np.abs(np.einsum("mk,mk->k", h_los.conj(), g_los))


def zf_precoder(H, beta):
    """Balanced, power-normalized ZF precoder; works on stacks (..., M, K)."""
    gram = np.swapaxes(H.conj(), -1, -2) @ H
    sv = np.linalg.svd(gram, compute_uv=False)
    if np.any(sv[..., -1] <= 1e-12 * sv[..., 0]):
        raise np.linalg.LinAlgError("channel matrix is rank deficient; ZF precoder undefined")
    W_raw = H @ np.linalg.inv(gram)
    norms = np.linalg.norm(W_raw, axis=-2, keepdims=True)
    inv_beta = 1.0 / np.asarray(beta)
    weight = np.sqrt(inv_beta / inv_beta.sum(axis=-1, keepdims=True))
    return W_raw / norms * weight[..., None, :]


def null_space_basis(H, normalization: str = "sqrt"):
    """Orthogonal basis of null(H^H), scaled so total AN power is 1 ("sqrt")
    or 1/N_AN ("literal")."""
    M, K = H.shape[-2:]
    Q, _ = np.linalg.qr(H, mode="complete")
    V = Q[..., :, K:]
    n_an = M - K
    scale = 1.0 / math.sqrt(n_an) if normalization == "sqrt" else 1.0 / n_an
    return V * scale


def build_realization(cfg: SystemConfig, geom: GeometryScenario, rng: np.random.Generator) -> ChannelRealization:
    """Draw one small-scale realization for a fixed deployment."""
    if geom.num_users != cfg.num_users:
        raise ValueError("geometry and config disagree on the number of users")
    beta, alpha, beta_tilde = large_scale_gains(cfg, geom)
    h_los, g_los = los_matrices(cfg, geom)
    M, K = cfg.num_antennas, cfg.num_users
    kappa = cfg.kappa
    H = rician_mix(h_los, complex_normal(rng, (M, K)), kappa)
    G = rician_mix(g_los, complex_normal(rng, (M, K)), kappa)
    W = zf_precoder(H, beta)
    V = null_space_basis(H, cfg.an_normalization)
    return ChannelRealization(H, G, beta, alpha, beta_tilde, W, V, los_correlation(h_los, g_los))
