"""
Partition witnesses
===================

Random configurations of k centers are grouped into well-separated clusters;
each cluster receives a small ball of admissible positions, certified in exact
arithmetic.
"""

from fractions import Fraction

import numpy as np

from dsflab.lpgeom import NormContext
from dsflab.partition import (c_k_constants, combinatorial_witness, dim1_partition, group_partition,
                              random_config, witness_scale)

print("C_k for k = 1..5:", [str(c) for c in c_k_constants(5)])

############################################################
# Grouping three centers: two close together, one far away.

ctx = NormContext(2, 2.0)
cfg = [(0, 0), (Fraction(1, 5000), 0), (40, 0)]
parts, eps = group_partition(cfg, Fraction(1, 4), ctx)
print("parts:", parts, " separation margin eps =", eps)

############################################################
# The one-dimensional construction: contiguous pieces, each of length at
# least 2 / k!.

r = dim1_partition([0, Fraction(1, 2), 3, Fraction(7, 2)])
print("dim1 parts:", r.parts, " piece lengths:", [str(x) for x in r.lengths])

############################################################
# Full witnesses for a few random configurations.

gen = np.random.default_rng(3)
for p in (1.0, 2.0, float("inf")):
    ctx = NormContext(3, p)
    eta, R0, _ = witness_scale(4, ctx, 1)
    w = combinatorial_witness(random_config(4, 3, gen, scale=R0), 1, ctx, n_mc=32)
    print(f"p={p:g}: parts={w.parts}, eta={float(eta):.3g}, verified={w.verified}")
