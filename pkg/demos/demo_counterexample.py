"""
Where the section argument breaks for p = 3
===========================================

A single-ball history in dimension three, in exact rational arithmetic, then a
Monte Carlo look at the uncovered proportion of horizontal sections.
"""

import numpy as np

from dsflab.domination import alpha_curve, single_ball_history, counterexample_verify
from dsflab.lpgeom import NormContext

############################################################
# Exact check: the lifted point is inside the ball, its base is not.

rep = counterexample_verify()
print(rep.text())

############################################################
# Uncovered fraction of the section at height h for p = 3 and p = 4.
# For p = 4 the curve drops visibly near the top.

hs = np.linspace(0.0, 0.95, 8)
for p in (3.0, 4.0):
    ctx = NormContext(3, p)
    est, se = alpha_curve(single_ball_history(3, p), hs, ctx, 200_000, seed=1)
    row = "  ".join(f"{a:.4f}" for a in est)
    print(f"p={p:g}  alpha_h: {row}  (stderr ~ {se.max():.4f})")
