"""Legitimate receive chain: detect, authenticate, decode."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .tbe import (
    QPSK,
    KeyMaterial,
    PowerSplit,
    demodulate_message,
    extract_feature,
    generate_tags,
    nearest_qpsk_index,
    tag_bits_from_symbols,
    tag_symbols,
)

# argmin order puts +1 first so a zero residual resolves to +1
_TAG_POINTS = np.array([1.0, -1.0])


class Hypothesis(enum.Enum):
    H0 = "reject"
    H1 = "authentic"


@dataclass(frozen=True)
class AuthDecision:
    hypothesis: Hypothesis
    statistic: int
    threshold: int

    @property
    def authentic(self) -> bool:
        return self.hypothesis is Hypothesis.H1


class RejectedBlockError(RuntimeError):
    """Decoding was requested for a block that failed authentication."""


def normalize_rx(y, split: PowerSplit, cfg: SystemConfig, beta_tilde: float):
    """Scale out the nominal ZF gain: ``y / (phi_s sqrt(P_T beta~ M))``."""
    if split.phi_s <= 0:
        raise ValueError("phi_s = 0: no signal power to normalize by")
    return np.asarray(y) / (split.phi_s * math.sqrt(cfg.tx_power_mw * beta_tilde * cfg.num_antennas))


def detect_ciphertext(y_tilde, rho_m: float):
    """Minimum-distance QPSK detection against ``rho_m * X_m``."""
    return QPSK[nearest_qpsk_index(y_tilde, rho_m)]


def detect_embedded_tag(y_tilde, c_hat, rho_m: float, rho_t: float):
    """Detect the tag from the residual ``r = y~ - rho_m c^``."""
    r = np.asarray(y_tilde) - rho_m * np.asarray(c_hat)
    if rho_t > 0:
        # |r - rho_t|^2 - |r + rho_t|^2 = -4 rho_t Re(r)
        return np.where(r.real >= 0, 1.0, -1.0)
    d = np.abs(r[..., None] - rho_t * _TAG_POINTS)
    return _TAG_POINTS[np.argmin(d, axis=-1)]


def regenerate_tag(key: KeyMaterial, c_hat):
    """Expected tag symbols from the feature of the detected ciphertext."""
    return tag_symbols(generate_tags(key, extract_feature(c_hat)))


def hamming_statistic(t_hat, t_tilde):
    """Number of disagreeing slots along the last axis."""
    return np.sum(tag_bits_from_symbols(t_hat) != tag_bits_from_symbols(t_tilde), axis=-1)


def authenticate(t_hat, t_tilde, eta: int) -> AuthDecision:
    """Accept (H1) iff the tag mismatch count is at most ``eta``."""
    t_hat = np.asarray(t_hat)
    if not 0 <= eta <= t_hat.shape[-1]:
        raise ValueError(f"threshold {eta} outside [0, T]")
    stat = int(hamming_statistic(t_hat, t_tilde))
    return AuthDecision(Hypothesis.H1 if stat <= eta else Hypothesis.H0, stat, int(eta))


def decode_plaintext(c_hat, t_tilde, decision: AuthDecision | None = None):
    """Undo the phase reversal with the regenerated tag and demodulate."""
    if decision is not None and not decision.authentic:
        raise RejectedBlockError(f"block rejected (L={decision.statistic} > eta={decision.threshold})")
    s_hat = np.asarray(t_tilde) * np.asarray(c_hat)
    return s_hat, demodulate_message(s_hat)


@dataclass(frozen=True)
class RxBlock:
    y: np.ndarray
    y_tilde: np.ndarray
    c_hat: np.ndarray
    r: np.ndarray
    t_hat: np.ndarray
    t_tilde: np.ndarray
    decision: AuthDecision
    s_hat: np.ndarray | None
    m_hat: np.ndarray | None

    @property
    def statistic(self) -> int:
        return self.decision.statistic


def receive_block(y, key: KeyMaterial, split: PowerSplit, cfg: SystemConfig, beta_tilde: float,
                  eta: int) -> RxBlock:
    """Full legitimate chain for one user's block; rejected blocks keep diagnostics."""
    y_tilde = normalize_rx(y, split, cfg, beta_tilde)
    c_hat = detect_ciphertext(y_tilde, split.rho_m)
    r = y_tilde - split.rho_m * c_hat
    t_hat = detect_embedded_tag(y_tilde, c_hat, split.rho_m, split.rho_t)
    t_tilde = regenerate_tag(key, c_hat)
    decision = authenticate(t_hat, t_tilde, eta)
    s_hat = m_hat = None
    if decision.authentic:
        s_hat, m_hat = decode_plaintext(c_hat, t_tilde, decision)
    return RxBlock(np.asarray(y), y_tilde, c_hat, r, t_hat, t_tilde, decision, s_hat, m_hat)
