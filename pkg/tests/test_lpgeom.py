import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsflab.lpgeom import (Ball, Box, HalfBall, NormContext, alpha_p, empty_ball_check, mc_measure,
                           phi_inverse, phi_map, rho)

TOL = 1e-10


@pytest.mark.parametrize("v,d,p,expected", [
    ((3.0, 4.0), 2, 2.0, 5.0),
    ((1.0, -2.0, 3.0), 3, math.inf, 3.0),
    ((1.0, 1.0, 1.0), 3, 1.0, 3.0),
])
def test_norm_values(v, d, p, expected):
    assert NormContext(d, p).norm(np.array(v)) == pytest.approx(expected, abs=TOL)


def test_bad_p_rejected():
    with pytest.raises(ValueError):
        NormContext(2, 0.5)


def test_alpha_p():
    assert alpha_p(2.0) == pytest.approx(math.sqrt(2) - 1, abs=TOL)
    assert alpha_p(1.0) == pytest.approx(1.0, abs=TOL)
    assert alpha_p(1e6) == pytest.approx(6.931e-7, rel=1e-3)


def test_rho_values():
    assert rho(0.7, NormContext(2, math.inf)) == 1.0
    assert rho(2 / 3, NormContext(3, 3.0)) == pytest.approx((19 / 27) ** (1 / 3), abs=TOL)
    for p in (1.0, 2.0, 3.0, math.inf):
        assert rho(0.0, NormContext(2, p)) == pytest.approx(1.0, abs=TOL)


def test_phi_map_examples(ctx22):
    x = np.array([0.3, 0.0])
    assert np.allclose(phi_map(x, ctx22), x, atol=TOL)
    h = 0.6
    y = np.array([rho(h, ctx22) * 0.5, h])
    assert np.allclose(phi_map(y, ctx22), [0.5, 0.0], atol=TOL)
    c3 = NormContext(3, 3.0)
    z = phi_inverse(np.array([0.75, -0.5, 0.0]), 2 / 3, c3)
    assert np.allclose(phi_map(z, c3), [0.75, -0.5, 0.0], atol=TOL)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 0.99), st.floats(-1, 1), st.sampled_from([1.0, 1.5, 2.0, 3.0, math.inf]))
def test_phi_roundtrip(h, a, p):
    c = NormContext(2, p)
    x0 = np.array([a, 0.0])
    assert np.allclose(phi_map(phi_inverse(x0, h, c), c), x0, atol=1e-9)


def test_membership(ctx22):
    assert Ball(np.zeros(2), 1.0).contains(np.zeros((1, 2)), ctx22)[0]
    assert not HalfBall(np.zeros(2), 1.0).contains(np.array([[0.0, -0.5]]), ctx22)[0]


def test_mc_measure_oracles(ctx22):
    est, se = mc_measure(Box(np.zeros(2), np.ones(2)), (np.zeros(2), np.ones(2)), 1000, 0, ctx22)
    assert est == 1.0 and se == 0.0
    est, se = mc_measure(Ball(np.zeros(2), 1.0), (-np.ones(2), np.ones(2)), 10 ** 6, 1, ctx22)
    assert abs(est - math.pi) <= 3 * se
    c1 = NormContext(2, 1.0)
    est, se = mc_measure(HalfBall(np.zeros(2), 1.0), (np.array([-1.0, 0.0]), np.ones(2)), 10 ** 6, 2, c1)
    assert abs(est - 1.0) <= 3 * se


def test_empty_ball_small():
    assert empty_ball_check(2, 2.0, 300, 200, seed=0) == 0


def test_empty_ball_negative_control():
    # inflating the radius past alpha_p must break the inclusion
    assert empty_ball_check(2, 2.0, 300, 200, seed=0, radius=1.05 * alpha_p(2.0)) > 0
