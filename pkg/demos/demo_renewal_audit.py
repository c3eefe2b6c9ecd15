"""
Renewals of a pair of trajectories in the plane
===============================================

Two trajectories started far apart are followed through their joint
renewals.  The lateral gap between them is summarized by its increments and
by the Lyapunov drift of log log(e + |z|^2).
"""

import math

import numpy as np

from dsflab import experiments as ex

cfg = ex.ExperimentConfig(d=2, p=math.inf, k=2, sep=1000.0, horizon=6000, reps=2, seed=4,
                          kappa=0.18, R=0.5)
recs = ex.run_replicates(ex.renewal_replicate, cfg)
Zs = [np.asarray(r["Z"], float) for r in recs]
Ws = [np.asarray(r["W"], float) for r in recs]
print("renewals per replicate:", [len(z) for z in Zs])

############################################################
# Block sizes: mean and tail slope of log P(W > t) against sqrt(t).

W = np.concatenate(Ws)
slope, ci = ex.block_tail(W)
print(f"mean block size {W.mean():.2f}; sqrt-tail slope {slope:.3f} CI ({ci[0]:.3f}, {ci[1]:.3f})")

############################################################
# Drift of V over quartile bins of |Z|.

a = np.concatenate([np.abs(z[:-1]) for z in Zs])
bins = list(np.quantile(a, [0, 0.25, 0.5, 0.75])) + [np.inf]
for b in ex.lyapunov_drift(Zs, bins):
    print(f"|Z| in [{b.lo:8.1f}, {b.hi:8.1f}): mean dV = {b.mean:+.2e} +- {b.stderr:.1e} (n={b.count})")
