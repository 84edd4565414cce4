"""Tag-based encoding (TBE) physical-layer security simulator for massive-MIMO UAV downlinks.

Modules: :mod:`~tbesim.config` (parameters), :mod:`~tbesim.channel`
(geometry, Rician channels, ZF and AN), :mod:`~tbesim.tbe` (transmit side),
:mod:`~tbesim.receiver`, :mod:`~tbesim.adversary`, :mod:`~tbesim.theory`
(closed forms), :mod:`~tbesim.optimize` (power allocation),
:mod:`~tbesim.simkit` (Monte Carlo) and :mod:`~tbesim.cli`.
"""
from .config import ConfigError, SystemConfig, format_config, load_config, parse_config
from .channel import GeometryScenario, build_realization, draw_geometry
from .tbe import KeyMaterial, PowerSplit, make_block
from .theory import PowerAllocation, Scenario, SecurityMetrics, evaluate
from .optimize import ConstraintSpec, dca_maximize_rsec, dca_multistart, solve_constrained_afp
from .simkit import TrialReport, compare_theory_sim, roc_sweep, run_montecarlo

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConstraintSpec",
    "GeometryScenario",
    "KeyMaterial",
    "PowerAllocation",
    "PowerSplit",
    "Scenario",
    "SecurityMetrics",
    "SystemConfig",
    "TrialReport",
    "build_realization",
    "compare_theory_sim",
    "dca_maximize_rsec",
    "dca_multistart",
    "draw_geometry",
    "evaluate",
    "format_config",
    "load_config",
    "make_block",
    "parse_config",
    "roc_sweep",
    "run_montecarlo",
    "solve_constrained_afp",
]
