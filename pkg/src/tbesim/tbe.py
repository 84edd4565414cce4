"""Transmit side of tag-based encoding.

A block of QPSK symbols ``s`` is reduced to an encoding-insensitive feature
(one quadrant-parity bit per slot). The tag is a keyed hash of that
feature, so a receiver holding the key can regenerate it from the
phase-reversed ciphertext ``c = t * s``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

# Gray-mapped QPSK: index c -> exp(j(pi/4 + c pi/2)); bit pair (b0 b1) -> c
QPSK = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
_BITS_TO_INDEX = {(0, 0): 0, (0, 1): 1, (1, 1): 2, (1, 0): 3}
_INDEX_TO_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)
_PAIR_TO_INDEX = np.array([0, 1, 3, 2])  # indexed by 2*b0 + b1
_QUADRANT_TO_INDEX = np.array([0, 1, 3, 2])  # indexed by (re < 0) + 2 (im < 0)


@dataclass(frozen=True)
class KeyMaterial:
    key: bytes
    num_bits: int

    @classmethod
    def from_bits(cls, bits) -> "KeyMaterial":
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(pack_bits(bits), len(bits))

    @classmethod
    def random(cls, num_bits: int, rng: np.random.Generator) -> "KeyMaterial":
        return cls.from_bits(rng.integers(0, 2, num_bits, dtype=np.uint8))

    @property
    def bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.key, dtype=np.uint8))[: self.num_bits]


@dataclass(frozen=True)
class PowerSplit:
    """Amplitude splits: message/tag (rho_m, rho_t) and signal/AN (phi_s, phi_n)."""

    rho_m: float
    rho_t: float
    phi_s: float
    phi_n: float

    def __post_init__(self):
        for name in ("rho_m", "rho_t", "phi_s", "phi_n"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if abs(self.rho_m**2 + self.rho_t**2 - 1) > 1e-9 or abs(self.phi_s**2 + self.phi_n**2 - 1) > 1e-9:
            raise ValueError("power splits must satisfy rho_m^2+rho_t^2 = phi_s^2+phi_n^2 = 1")

    @classmethod
    def from_powers(cls, rho: float, phi: float) -> "PowerSplit":
        """From the power fractions rho = rho_m^2 and phi = phi_s^2."""
        return cls(np.sqrt(rho), np.sqrt(max(0.0, 1 - rho)), np.sqrt(phi), np.sqrt(max(0.0, 1 - phi)))


def pack_bits(bits) -> bytes:
    """MSB-first byte packing (zero-padded to a whole byte)."""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def extract_feature(symbols) -> np.ndarray:
    """Quadrant-parity feature: 1 for quadrants I and III, 0 for II and IV.

    Works on any array shape; raises if a symbol lies on an axis.
    """
    symbols = np.asarray(symbols)
    re, im = symbols.real, symbols.imag
    if np.any(re == 0) or np.any(im == 0):
        raise ValueError("feature undefined for symbols on the real or imaginary axis")
    return ((re > 0) == (im > 0)).astype(np.uint8)


def generate_tag(key: KeyMaterial, feature) -> np.ndarray:
    """T tag bits from SHA-256(key || feature || counter), concatenated.

    ``feature`` is a 1-D bit array; its length sets the tag length.
    """
    feature = np.asarray(feature, dtype=np.uint8)
    n = feature.shape[-1]
    msg = key.key + pack_bits(feature)
    out = bytearray()
    counter = 0
    while len(out) * 8 < n:
        out += hashlib.sha256(msg + counter.to_bytes(4, "big")).digest()
        counter += 1
    return np.unpackbits(np.frombuffer(bytes(out), dtype=np.uint8))[:n]


def generate_tags(key: KeyMaterial, features) -> np.ndarray:
    """Row-wise :func:`generate_tag` for a (..., T) stack of features."""
    features = np.asarray(features, dtype=np.uint8)
    n = features.shape[-1]
    flat = features.reshape(-1, n)
    packed = np.packbits(flat, axis=-1)
    nhash = -(-n // 256)
    k = key.key
    out = bytearray()
    for row in packed:
        msg = k + row.tobytes()
        for counter in range(nhash):
            out += hashlib.sha256(msg + counter.to_bytes(4, "big")).digest()
    bits = np.unpackbits(np.frombuffer(bytes(out), dtype=np.uint8).reshape(len(flat), 32 * nhash), axis=-1)
    return bits[:, :n].reshape(features.shape)


def tag_symbols(tag_bits) -> np.ndarray:
    """Tag bits onto {-1, +1}: bit 0 -> -1 (phase reversal), bit 1 -> +1."""
    return 2.0 * np.asarray(tag_bits, dtype=float) - 1.0


def tag_bits_from_symbols(t) -> np.ndarray:
    return (np.asarray(t) > 0).astype(np.uint8)


def modulate_message(bits) -> np.ndarray:
    """Gray-mapped QPSK; the last axis holds 2T bits."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] % 2:
        raise ValueError(f"bit count {bits.shape[-1]} not divisible by 2")
    pairs = bits.reshape(*bits.shape[:-1], -1, 2)
    idx = _PAIR_TO_INDEX[2 * pairs[..., 0] + pairs[..., 1]]
    return QPSK[idx]


def _nearest_slow(y, scale):
    d = np.abs(y[..., None] - scale * QPSK)
    return np.argmin(d, axis=-1)


def nearest_qpsk_index(y, scale: float = 1.0) -> np.ndarray:
    """argmin_c |y - scale * X_m[c]|, ties to the lowest index.

    For ``scale > 0`` the argmin is the quadrant of ``y``; samples on an axis
    are ties and go through the explicit distance comparison.
    """
    y = np.asarray(y)
    if scale <= 0:
        return _nearest_slow(y, scale)
    re, im = y.real, y.imag
    idx = _QUADRANT_TO_INDEX[(re < 0).view(np.uint8) + 2 * (im < 0).view(np.uint8)]
    tie = (re == 0) | (im == 0)
    if np.any(tie):
        idx = np.asarray(idx)
        idx[tie] = _nearest_slow(y[tie], scale)
    return idx


def demodulate_message(symbols) -> np.ndarray:
    """Hard decision back to Gray bits (inverse of :func:`modulate_message`)."""
    idx = nearest_qpsk_index(symbols)
    bits = _INDEX_TO_BITS[idx]
    return bits.reshape(*bits.shape[:-2], -1)


def encode_ciphertext(s, tag_bits) -> np.ndarray:
    """Phase reversal: ``c = -s`` where the tag bit is 0, ``c = s`` where it is 1."""
    s = np.asarray(s)
    tag_bits = np.asarray(tag_bits)
    if s.shape != tag_bits.shape:
        raise ValueError(f"shape mismatch {s.shape} vs {tag_bits.shape}")
    return tag_symbols(tag_bits) * s


def compose_tx(c, t, split: PowerSplit) -> np.ndarray:
    """Superimpose the tag on the ciphertext: ``x = rho_m c + rho_t t``."""
    return split.rho_m * np.asarray(c) + split.rho_t * np.asarray(t)


@dataclass(frozen=True)
class MessageBlock:
    bits: np.ndarray
    symbols: np.ndarray
    feature: np.ndarray
    tag_bits: np.ndarray
    tag_symbols: np.ndarray
    ciphertext: np.ndarray
    tx_signal: np.ndarray


def make_block(key: KeyMaterial, bits, split: PowerSplit) -> MessageBlock:
    """Run the full transmit chain on one user's 2T message bits."""
    s = modulate_message(bits)
    feat = extract_feature(s)
    tbits = generate_tag(key, feat)
    t = tag_symbols(tbits)
    c = t * s
    return MessageBlock(np.asarray(bits, dtype=np.uint8), s, feat, tbits, t, c, compose_tx(c, t, split))
