"""
Coalescence in the plane, escape in dimension four
==================================================

Two trajectories started 5 apart merge quickly in d = 2.  In d = 4 three
trajectories started 50 apart mostly drift apart.  The coalescence-time tail
estimator is checked on synthetic data first.
"""

from dsflab import experiments as ex

############################################################
# The tail estimator on an exact t^{-1/2} law and on an exponential control.

res = ex.synthetic_tail_selftest(seed=0)
print("tail self-test passed:", res["passed"],
      " power slope", round(res["power"]["slope"], 3),
      " exponential slope", round(res["exponential"]["slope"], 3))

############################################################
# d = 2: coalescence frequency up to height 2000.

cfg = ex.ExperimentConfig(d=2, p=2.0, k=2, sep=5.0, horizon=2000, reps=30, seed=1)
s = ex.coalescence_summary(ex.coalescence_run(cfg))
print(f"d=2: coalesced {s['coalesced']}/{s['reps']}, median T = {s['median_T']:.1f}")

############################################################
# d = 4: fraction of merges before height 100, by initial separation.

for sep in (5.0, 50.0):
    cfg = ex.ExperimentConfig(d=4, p=2.0, k=3, sep=sep, horizon=100, reps=30, seed=2)
    s = ex.coalescence_summary(ex.coalescence_run(cfg))
    print(f"d=4, sep={sep:g}: any pair merged in {s['coalesced']}/{s['reps']}")

############################################################
# Diffusive scaling: calibrate gamma and sigma, then check the scaled
# variance at time 1.

gamma, sigma = ex.calibrate_scaling(2, 2.0, seed=0)
var, se = ex.scaled_variance(2, 2.0, gamma, sigma, n_scale=5.0, reps=200, seed=1)
print(f"gamma={gamma:.3f} sigma={sigma:.3f}  scaled variance at t=1: {var:.3f} +- {se:.3f}")
