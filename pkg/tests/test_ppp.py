import math

import numpy as np
import pytest
from scipy import stats

from dsflab.lpgeom import HalfSpace, NormContext, Everything, Nothing, HalfBall
from dsflab.ppp import PointStore, resample_outside


def test_zero_volume_box_empty():
    s = PointStore(2, seed=1)
    assert len(s.points_in_box(np.array([0.0, 0.0]), np.array([0.0, 5.0]))) == 0


def test_counts_concentrate():
    lo, hi = np.zeros(2), np.full(2, 100.0)
    for seed in range(20):
        n = len(PointStore(2, seed=seed).points_in_box(lo, hi))
        assert abs(n - 1e4) <= 4 * 100


def test_same_seed_same_points_any_order():
    a, b = PointStore(2, seed=7), PointStore(2, seed=7)
    lo, hi = np.array([-3.0, -3.0]), np.array([3.0, 3.0])
    b.points_in_box(np.array([10.0, 10.0]), np.array([12.0, 12.0]))
    assert np.array_equal(np.sort(a.points_in_box(lo, hi), axis=0), np.sort(b.points_in_box(lo, hi), axis=0))


def _count_table(a, b, cap=4):
    t = np.zeros((cap, cap))
    for x, y in zip(np.minimum(a, cap - 1), np.minimum(b, cap - 1)):
        t[x, y] += 1
    return t[t.sum(1) > 0][:, t.sum(0) > 0]


def test_disjoint_boxes_independent():
    a, b = [], []
    for seed in range(1000):
        s = PointStore(2, seed=seed)
        a.append(len(s.points_in_box(np.array([0.0, 0.0]), np.array([1.5, 1.0]))))
        b.append(len(s.points_in_box(np.array([1.5, 0.0]), np.array([3.0, 1.0]))))
    assert stats.chi2_contingency(_count_table(a, b))[1] > 0.01
    assert stats.kstest(a, stats.poisson(1.5).cdf).statistic < 0.5  # sanity on the law


def test_nearest_above_single_and_norm_dependence():
    c2 = NormContext(2, 2.0)
    s = PointStore.from_points(np.array([[0.0, 2.0]]), d=2, ctx=c2)
    assert np.array_equal(s.nearest_above(np.zeros(2)), [0.0, 2.0])
    pts = np.array([[3.0, 1.0], [2.5, 2.5]])
    s1 = PointStore.from_points(pts, d=2, ctx=NormContext(2, 1.0))
    sinf = PointStore.from_points(pts, d=2, ctx=NormContext(2, math.inf))
    assert np.array_equal(s1.nearest_above(np.zeros(2)), [3.0, 1.0])
    assert np.array_equal(sinf.nearest_above(np.zeros(2)), [2.5, 2.5])


def test_nearest_above_ignores_level_and_mask():
    c2 = NormContext(2, 2.0)
    pts = np.array([[0.1, 0.0], [0.0, 1.0], [0.0, 3.0]])
    s = PointStore.from_points(pts, d=2, ctx=c2)
    assert np.array_equal(s.nearest_above(np.zeros(2)), [0.0, 1.0])
    mask = HalfBall(np.zeros(2), 2.0)
    assert np.array_equal(s.nearest_above(np.zeros(2), mask=mask), [0.0, 3.0])


def test_resample_keep_everything_and_nothing():
    c2 = NormContext(2, 2.0)
    s = PointStore(2, seed=3, ctx=c2)
    lo, hi = np.array([-2.0, -2.0]), np.array([2.0, 2.0])
    base = np.sort(s.points_in_box(lo, hi), axis=0)
    same = resample_outside(s, Everything(), ctx=c2)
    assert np.array_equal(np.sort(same.points_in_box(lo, hi), axis=0), base)
    fresh = resample_outside(s, Nothing(), ctx=c2)
    assert not np.array_equal(np.sort(fresh.points_in_box(lo, hi), axis=0), base)


def test_resample_above_level_independent():
    c2 = NormContext(2, 2.0)
    keep = HalfSpace(0.0, above=False)
    lo, hi = np.array([0.0, 0.5]), np.array([1.5, 1.5])
    old, new = [], []
    for seed in range(1000):
        s = PointStore(2, seed=seed, ctx=c2)
        old.append(len(s.points_in_box(lo, hi)))
        new.append(len(resample_outside(s, keep, ctx=c2).points_in_box(lo, hi)))
    assert stats.chi2_contingency(_count_table(old, new))[1] > 0.01
    assert abs(np.mean(new) - 1.5) < 4 * math.sqrt(1.5 / 1000)
