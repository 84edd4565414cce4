"""Eavesdropper reception, combining and tag-based decoding attempts.

Eavesdroppers never hold the key: they detect ciphertext and tag exactly
like a legitimate receiver, then use the *detected* tag to undo the phase
reversal. Nothing here touches :mod:`tbesim.tbe` tag generation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, complex_normal
from .receiver import detect_ciphertext, detect_embedded_tag
from .tbe import QPSK, PowerSplit


class CombiningError(np.linalg.LinAlgError):
    """The eavesdropper combiner W^H G G^H W is singular."""


@dataclass(frozen=True)
class EveBlock:
    Y_E: np.ndarray
    Y_tilde: np.ndarray
    C_hat: np.ndarray
    T_hat: np.ndarray
    S_hat: np.ndarray


def eve_receive(real: ChannelRealization, X, split: PowerSplit, tx_power_mw: float, noise_mw: float,
                rng: np.random.Generator):
    """Wiretapped samples, one row per eavesdropper (K x T).

    ``X`` is K x T (row k = user k's transmit block). Fresh AN and thermal
    noise are drawn from ``rng``.
    """
    X = np.asarray(X)
    K, T = X.shape
    Z = complex_normal(rng, (real.num_an, T))
    N = complex_normal(rng, (K, T), noise_mw)
    tx = split.phi_s * (real.W @ X) + split.phi_n * (real.V @ Z)
    return np.sqrt(tx_power_mw * real.alpha_e)[:, None] * (real.G.conj().T @ tx) + N


def combiner(real: ChannelRealization):
    """K x K matrix mapping de-scaled eavesdropper rows back onto user streams."""
    A = real.G.conj().T @ real.W  # A[e, k] = g_e^H w_k
    gram = A.conj().T @ A
    if np.linalg.cond(gram) > 1e12:
        raise CombiningError("W^H G G^H W is singular")
    return np.linalg.solve(gram, A.conj().T)


def eve_combine(Y_E, real: ChannelRealization, split: PowerSplit, tx_power_mw: float):
    """Right-inverse combining: undo the large-scale gains and G^H W."""
    if split.phi_s <= 0:
        raise ValueError("phi_s = 0: nothing to combine")
    Y = np.asarray(Y_E) / np.sqrt(real.alpha_e)[:, None]
    return combiner(real) @ Y / (split.phi_s * np.sqrt(tx_power_mw))


def eve_detect_and_decode(Y_tilde, rho_m: float, rho_t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Detect ciphertext and tag per slot and decode with the detected tag."""
    C_hat = detect_ciphertext(Y_tilde, rho_m)
    T_hat = detect_embedded_tag(Y_tilde, C_hat, rho_m, rho_t)
    return C_hat, T_hat, C_hat * T_hat


def wiretap_block(real: ChannelRealization, X, split: PowerSplit, tx_power_mw: float, noise_mw: float,
                  rng: np.random.Generator) -> EveBlock:
    Y_E = eve_receive(real, X, split, tx_power_mw, noise_mw, rng)
    Y_tilde = eve_combine(Y_E, real, split, tx_power_mw)
    C_hat, T_hat, S_hat = eve_detect_and_decode(Y_tilde, split.rho_m, split.rho_t)
    return EveBlock(Y_E, Y_tilde, C_hat, T_hat, S_hat)


def jamming_block(num_users: int, block_len: int, rng: np.random.Generator):
    """Random message symbols with independent random tags (K x T each)."""
    c = QPSK[rng.integers(0, 4, (num_users, block_len))]
    t = 2.0 * rng.integers(0, 2, (num_users, block_len)) - 1.0
    return c, t
