"""System parameters and the flat key-value scenario file format.

All powers are stored in the units used by the parameter table (dBm, dB,
GHz) and converted once through the read-only properties; every other
module works in linear units (mW, ratios, meters).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Invalid scenario configuration (bad key, bad value, broken invariant)."""


@dataclass(frozen=True)
class SystemConfig:
    num_antennas: int = 64
    num_users: int = 4
    block_len: int = 160
    tx_power_dbm: float = 5.0
    carrier_ghz: float = 2.4
    bandwidth_hz: float = 300e6
    thermal_noise_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    ue_height: float = 100.0
    eve_height: float = 80.0
    ue_horiz_range: tuple[float, float] = (10.0, 100.0)
    rician_kappa_db: float = 30.0
    angle_offset_deg: float = 1.0
    key_bits: int = 64
    pf_target: float = 1e-3
    # None means half a wavelength
    antenna_spacing: float | None = None
    # "db": beta = 10^(-PL/10); "literal": beta = 1/PL
    path_loss_convention: str = "db"
    # "sqrt": v_i = v~_i / (sqrt(N_AN)|v~_i|), unit total AN power;
    # "literal": v_i = v~_i / (N_AN |v~_i|)
    an_normalization: str = "sqrt"

    def __post_init__(self):
        lo, hi = self.ue_horiz_range
        object.__setattr__(self, "ue_horiz_range", (float(lo), float(hi)))
        if self.num_users < 1 or self.num_antennas < 1 or self.block_len < 1:
            raise ConfigError("num_antennas, num_users and block_len must be positive")
        if self.num_users >= self.num_antennas:
            raise ConfigError(f"need num_users < num_antennas, got K={self.num_users}, M={self.num_antennas}")
        if not lo < hi:
            raise ConfigError(f"ue_horiz_range must satisfy l_min < l_max, got {self.ue_horiz_range}")
        if lo < 0:
            raise ConfigError("ue_horiz_range must be non-negative")
        if not 0.0 < self.pf_target < 1.0:
            raise ConfigError(f"pf_target must lie in (0, 1), got {self.pf_target}")
        if not 0.5 < self.carrier_ghz < 100.0:
            raise ConfigError(f"carrier_ghz must lie in (0.5, 100), got {self.carrier_ghz}")
        if self.key_bits < 1:
            raise ConfigError("key_bits must be positive")
        if self.ue_height <= 0 or self.eve_height <= 0:
            raise ConfigError("heights must be positive")
        if self.path_loss_convention not in ("db", "literal"):
            raise ConfigError(f"unknown path_loss_convention {self.path_loss_convention!r}")
        if self.an_normalization not in ("sqrt", "literal"):
            raise ConfigError(f"unknown an_normalization {self.an_normalization!r}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)

    @property
    def spacing(self) -> float:
        return self.wavelength / 2 if self.antenna_spacing is None else self.antenna_spacing

    @property
    def tx_power_mw(self) -> float:
        return 10.0 ** (self.tx_power_dbm / 10.0)

    @property
    def noise_power_dbm(self) -> float:
        return self.thermal_noise_dbm_hz + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    @property
    def noise_power_mw(self) -> float:
        return 10.0 ** (self.noise_power_dbm / 10.0)

    @property
    def kappa(self) -> float:
        return 10.0 ** (self.rician_kappa_db / 10.0)

    @property
    def num_an(self) -> int:
        return self.num_antennas - self.num_users

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}


def _parse_value(name: str, raw: str, lineno: int):
    ftype = _FIELDS[name].type
    try:
        if name == "ue_horiz_range":
            parts = [p for p in raw.replace(",", " ").split() if p]
            if len(parts) != 2:
                raise ValueError("expected two numbers")
            return (float(parts[0]), float(parts[1]))
        if name == "antenna_spacing":
            return None if raw.lower() in ("", "none", "auto") else float(raw)
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {name!r}: {raw!r} ({exc})") from None


def parse_config(text: str, base: SystemConfig | None = None) -> SystemConfig:
    """Parse ``key = value`` lines into a :class:`SystemConfig`.

    Blank lines and ``#`` comments are ignored. Unknown keys are errors.
    Keys not present keep the values of ``base`` (Table II by default).
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, lineno)
    base = base or SystemConfig()
    return base.replace(**values)


def load_config(path: str | Path) -> SystemConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: SystemConfig) -> str:
    lines = []
    for name in _FIELDS:
        val = getattr(cfg, name)
        if name == "ue_horiz_range":
            val = f"{val[0]!r}, {val[1]!r}"
        elif val is None:
            val = "auto"
        lines.append(f"{name} = {val}")
    return "\n".join(lines) + "\n"
