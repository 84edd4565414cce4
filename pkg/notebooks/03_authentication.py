"""
Tag authentication: threshold and ROC
=====================================

The receiver regenerates the tag from the ciphertext feature and counts
mismatches L against the detected tag. The threshold eta is the largest
value whose false-alarm probability stays under the target.
"""

import numpy as np

from tbesim.cli import default_scenario
from tbesim.config import SystemConfig
from tbesim.simkit import roc_sweep
from tbesim.theory import PowerAllocation, binom_cdf_all, evaluate, false_alarm_all, select_threshold

scn = default_scenario(SystemConfig())
T = scn.cfg.block_len
print("eta for P_f <= 1e-3 at T=160:", select_threshold(T, 1e-3))

###############################################################################
# Closed-form ROC points at a few thresholds, then the simulated curve.

p = PowerAllocation(0.999, 1.0)
m = evaluate(scn, p)
pd = binom_cdf_all(T, m.links.user.ser_t)
pf = false_alarm_all(T, m.links.user.ser_t, m.p_b)
roc = roc_sweep(scn, p, 3000, seed=3)
for eta in (40, 50, 60, 70):
    print(f"eta={eta}: P_f {pf[eta]:.2e} (sim {roc[eta, 1]:.2e})  P_d {pd[eta]:.4f} (sim {roc[eta, 2]:.4f})")
print("simulated P_d is non-decreasing in eta:", bool(np.all(np.diff(roc[:, 2]) >= 0)))
