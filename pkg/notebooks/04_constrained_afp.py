"""
Minimizing authentication fail probability under constraints
=============================================================

AFP = 1 - (1 - BLER) P_d. The solver first tries the unconstrained optimum
(phi = 1, best rho), then makes the secrecy constraint P_w >= P_w0, the
authentication constraint P_d >= P_d0 or both active.
"""

from tbesim.cli import default_scenario
from tbesim.config import SystemConfig
from tbesim.optimize import ConstraintSpec, solve_constrained_afp

scn = default_scenario(SystemConfig())

# the last two cases drive P_d to its limit, where the AFP slice in rho can lose
# its single valley; the solver then warns and falls back to a grid
for pw0, pd0 in [(0.01, 0.5), (0.3, 0.5), (0.01, 0.9999), (0.3, 0.9999), (0.5, 0.9999)]:
    sol = solve_constrained_afp(scn, ConstraintSpec(pw0, pd0))
    base = solve_constrained_afp(scn, ConstraintSpec(pw0, pd0), scheme="baseline")
    where = f"case {sol.case} at rho={sol.p.rho:.4f}, phi={sol.p.phi:.3f}" if sol.feasible else "infeasible"
    print(f"P_w0={pw0} P_d0={pd0}: TBE AFP {sol.afp:.4f} ({where}); without TBE {base.afp:.4f}")
