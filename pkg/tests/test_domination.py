import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from dsflab.domination import (InsufficientDataError, RecenteredHistory, alpha_curve,
                               alpha_h_estimate, single_ball_history, counterexample_verify,
                               ecdf_dominance, lift, random_h0, sample_U, sample_X,
                               section_inclusion_test, uniformisation_check)
from dsflab.lpgeom import NormContext, rho, sample_lp_ball

C2 = NormContext(2, 2.0)


def test_x_empty_radial_law():
    X, _ = sample_X(None, C2, 0, 100_000)
    r = C2.norm(X)
    # void probability of the upper half-disk of radius r
    res = stats.kstest(r, lambda t: 1.0 - np.exp(-math.pi * t ** 2 / 2))
    assert res.pvalue > 0.01


def test_x_empty_direction_uniform():
    # given |X| the point is uniform on the upper half-circle; compare with a direct ball sampler
    X, _ = sample_X(None, C2, 1, 50_000)
    u = X / C2.norm(X)[:, None]
    gen = np.random.default_rng(2)
    ref = sample_lp_ball(200_000, 2, 2.0, gen)
    ref = ref[ref[:, 1] > 0]
    ref = ref / C2.norm(ref)[:, None]
    assert stats.ks_2samp(u[:, 0], ref[:, 0]).pvalue > 0.01


def test_u_empty_mean_height_inf():
    c = NormContext(2, math.inf)
    U = sample_U(None, c, 3, 100_000)
    se = U[:, 1].std() / math.sqrt(len(U))
    assert abs(U[:, 1].mean() - 0.5) < 4 * se


def test_ecdf_trivial_cases():
    a = np.random.default_rng(0).normal(size=5000)
    assert ecdf_dominance(a, a).passed
    cmp = ecdf_dominance(a + 1.0, a)
    assert cmp.passed and np.all(cmp.survival_a >= cmp.survival_b)
    assert not ecdf_dominance(a, a + 1.0).passed


def test_dominance_random_history_d3():
    c = NormContext(3, 2.0)
    H = random_h0(3, c, np.random.default_rng(4), n_balls=2)
    XH, _ = sample_X(H, c, 5, 100_000)
    X0, _ = sample_X(None, c, 6, 100_000)
    assert ecdf_dominance(XH[:, -1], X0[:, -1]).passed


def test_alpha_trivial():
    assert alpha_h_estimate(RecenteredHistory.empty(2), 0.3, C2, 100, 0) == (1.0, 0.0)
    big = RecenteredHistory(np.zeros((1, 2)), [2.0])  # covers every section
    assert alpha_h_estimate(big, 0.3, C2, 1000, 0)[0] == 0.0


def test_alpha_single_ball_history():
    c = NormContext(3, 3.0)
    est, _ = alpha_curve(single_ball_history(), [0.0], c, 20_000, 0)
    assert est[0] < 1.0
    # the curve is visibly non-constant for p = 4
    c4 = NormContext(3, 4.0)
    est, se = alpha_curve(single_ball_history(3, 4), [0.0, 0.95], c4, 200_000, 0)
    assert est[0] - est[1] > 4 * math.hypot(se[0], se[1])


def test_section_inclusion_cases():
    assert len(section_inclusion_test(None, 0.5, 0.0, C2, 100, 0)) == 0
    c = NormContext(3, 2.0)
    H = random_h0(3, c, np.random.default_rng(8), n_balls=2)
    assert len(section_inclusion_test(H, 0.7, 0.2, c, 10_000, 1)) == 0
    c3 = NormContext(3, 3.0)
    x0 = np.array([[0.75, -0.5, 0.0]])
    bad = section_inclusion_test(single_ball_history(), 2 / 3, 0.0, c3, 0, 0, points=x0)
    assert len(bad) == 1


def test_single_ball_point_membership():
    c3 = NormContext(3, 3.0)
    H = single_ball_history()
    x0 = np.array([0.75, -0.5, 0.0])
    assert H.section_contains(lift(x0, 2 / 3, c3), c3)
    assert not H.section_contains(x0, c3)


def test_counterexample_exact():
    rep = counterexample_verify()
    assert rep.lifted_cube_sum == Fraction(11527, 216)
    assert rep.base_cube == Fraction(3473, 64)
    assert rep.radius_cube == 54
    assert rep.lifted_cube_sum < 54 < rep.base_cube
    assert rep.passed
    assert "11527/216" in rep.text() and "3473/64" in rep.text()


def test_uniformisation():
    assert uniformisation_check(None, C2, 100_000, 0).passed
    with pytest.raises(InsufficientDataError):
        uniformisation_check(None, C2, 0, 0)


def test_history_rejects_upper_centers():
    with pytest.raises(ValueError):
        RecenteredHistory(np.array([[0.0, 1.0]]), [0.5])
