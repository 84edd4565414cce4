"""
Closed-form SERs against the link-level simulation
==================================================

The simulator draws Rician channels, ZF precoders and artificial noise per
block and runs the full transmit and receive chains. Users agree with the
closed forms. Eavesdroppers agree once the combiner and AN-leakage assumptions
behind the formulas are made explicit.
"""

from tbesim.cli import default_scenario, ser_point
from tbesim.config import SystemConfig
from tbesim.theory import PowerAllocation

scn = default_scenario(SystemConfig())

###############################################################################
# 2000 blocks per point keeps this quick; the acceptance run uses 10^5.

for combining, g_variant in [("right-inverse", "printed"), ("sic", "projected")]:
    print(f"combiner {combining}, AN leakage {g_variant}")
    for rho, phi in [(0.92, 1.0), (0.95, 0.6), (0.98, 1.0)]:
        res = ser_point(scn, PowerAllocation(rho, phi), 2000, seed=1, combining=combining, g_variant=g_variant)
        cells = "  ".join(f"{m} {th:.3f}/{sim:.3f}{'' if ok else '*'}" for m, (th, sim, se, ok) in res.items())
        print(f"  rho={rho} phi={phi}: {cells}")
print("(theory/simulation, * = outside 3 standard errors)")
