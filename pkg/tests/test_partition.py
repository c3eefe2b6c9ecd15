import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsflab.lpgeom import NormContext
from dsflab.partition import (ExactNorm, as_config, barycenter, c_k_constants, combinatorial_witness,
                              dim1_partition, group_partition, grow_cluster, radius_pow,
                              random_config, witness_scale)

C2 = NormContext(2, 2.0)


def test_c_k_values():
    assert c_k_constants(3) == [1, 3, Fraction(16, 3)]


def test_grow_cluster_cases():
    assert grow_cluster([(0, 0)], 0, 1, C2) == (0,)
    assert grow_cluster([(0, 0), (10, 0)], 0, 1, C2) == (0,)
    pi = grow_cluster([(0, 0), (Fraction(1, 2), 0)], 0, 1, C2)
    assert pi == (0, 1)
    cfg = as_config([(0, 0), (Fraction(1, 2), 0)])
    en = ExactNorm(2.0)
    assert radius_pow(cfg, pi, en, barycenter(cfg, pi)) == Fraction(1, 16)  # r = 1/4


def test_group_partition_cases():
    assert group_partition([(5, 0)], Fraction(1, 3), C2)[0] == [(0,)]
    parts, eps = group_partition([(0, 0, 0), (100, 0, 0), (0, 100, 0)], 1, NormContext(3, 2.0))
    assert sorted(parts) == [(0,), (1,), (2,)] and eps > 0
    tight = [(0, 0), (Fraction(1, 100), 0), (Fraction(2, 100), 0)]
    assert group_partition(tight, 1, C2)[0] == [(0, 1, 2)]


def test_dim1_cases():
    r = dim1_partition([0])
    assert r.parts == [(0,)] and r.lengths == [2]
    r = dim1_partition([0, 3])
    assert sorted(r.parts) == [(0,), (1,)] and min(r.lengths) >= 1
    r = dim1_partition([0, Fraction(1, 2)])
    assert r.min_length >= 1


@settings(max_examples=200, deadline=None)
@given(st.lists(st.fractions(-10, 10, max_denominator=64), min_size=1, max_size=5))
def test_dim1_min_piece(centers):
    r = dim1_partition(centers)
    assert r.min_length >= Fraction(2, math.factorial(len(centers)))
    assert sorted(i for pi in r.parts for i in pi) == list(range(len(centers)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.sampled_from([1.0, 2.0, math.inf]), st.integers(0, 10 ** 6))
def test_group_partition_postconditions(k, p, seed):
    # group_partition re-checks every postcondition exactly and raises on failure
    cfg = random_config(k, 2, np.random.default_rng(seed))
    parts, eps = group_partition(cfg, Fraction(1, 4), NormContext(2, p))
    assert sorted(i for pi in parts for i in pi) == list(range(k))


def test_witness_trivial_cases():
    w = combinatorial_witness([(3, 0)], 1, C2, n_mc=16)
    assert w.verified and w.parts == [(0,)]
    _, R0, _ = witness_scale(2, C2, 1)
    w = combinatorial_witness([(R0, 0), (R0, 0)], 1, C2, n_mc=16)
    assert w.verified and w.parts == [(0, 1)]


@pytest.mark.parametrize("p", [1.0, 2.0, math.inf])
@pytest.mark.parametrize("d", [2, 3])
def test_witness_random_batch(d, p):
    ctx = NormContext(d, p)
    gen = np.random.default_rng(17)
    for i in range(15):
        k = int(gen.integers(1, 6))
        _, R0, _ = witness_scale(k, ctx, 1)
        w = combinatorial_witness(random_config(k, d, gen, scale=R0), 1, ctx, n_mc=16, seed=i)
        assert w.verified
