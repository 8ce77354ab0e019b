"""Oracle tests for the radial multiplier.

Independent routes used here:
  * d=1 closed form sin(r)/r evaluated directly,
  * d=2 adaptive 1-D quadrature of the reduction integral (scipy.integrate.quad,
    nothing shared with the package's Gauss-Chebyshev rule),
  * d=2 Bessel closed form 2 J_1(r)/r,
  * minimum locations against the classical characterizations
    (tan r = r for d=1, the first zero of J_2 for d=2).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import j1, jn_zeros

from ballwalk.multiplier import (
    R_SWITCH,
    eval_Gd,
    eval_Gd_prime,
    find_min_M,
    gamma_d,
    multiplier_table,
    taylor_check,
    unit_ball_volume,
)

# frozen minimum values; r* solves tan r = r (d=1) and J_2(r) = 0 (d=2)
R_STAR_1 = 4.493409457909064
M_1 = -0.21723362821122165
R_STAR_2 = 5.135622301840683
M_2 = -0.13227948739610004


def _G2_reduction_oracle(r):
    val, _ = quad(
        lambda u: (2.0 / math.pi) * math.sqrt(1.0 - u * u) * math.cos(r * u),
        -1.0, 1.0, limit=400, epsabs=1e-13, epsrel=1e-13,
    )
    return val


def test_ball_volumes():
    assert unit_ball_volume(1) == pytest.approx(2.0, abs=1e-15)
    assert unit_ball_volume(2) == pytest.approx(math.pi, abs=1e-15)
    assert unit_ball_volume(0) == pytest.approx(1.0, abs=1e-15)


def test_gamma_d_values():
    assert gamma_d(1) == pytest.approx(1.0 / 6.0, abs=1e-16)
    assert gamma_d(2) == pytest.approx(1.0 / 8.0, abs=1e-16)


def test_G1_closed_form():
    r = np.linspace(1e-3, 40.0, 100)
    expected = np.sin(r) / r
    assert np.max(np.abs(eval_Gd(1, r) - expected)) < 1e-14
    assert eval_Gd(1, 0.0) == 1.0


def test_G2_against_reduction_quadrature():
    r_values = np.linspace(0.05, 30.0, 50)
    errs = [abs(eval_Gd(2, r) - _G2_reduction_oracle(r)) for r in r_values]
    assert max(errs) < 1e-10


def test_G2_against_bessel_closed_form():
    r = np.linspace(1e-3, 60.0, 200)
    expected = 2.0 * j1(r) / r
    assert np.max(np.abs(eval_Gd(2, r) - expected)) < 1e-10


def test_branch_agreement_window():
    # series and quadrature branches must agree around the switch point
    for d in (2,):
        for r in np.linspace(R_SWITCH - 0.5, R_SWITCH + 0.5, 21):
            lo = eval_Gd(d, r - 1e-9)
            hi = eval_Gd(d, r + 1e-9)
            assert abs(hi - lo) < 1e-8 * max(abs(lo), 1e-3)


def test_scalar_and_array_shapes():
    v = eval_Gd(1, 1.3)
    assert isinstance(v, float)
    arr = eval_Gd(2, np.array([0.0, 1.0, 5.0]))
    assert arr.shape == (3,)
    assert arr[0] == 1.0


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        eval_Gd(3, 1.0)
    with pytest.raises(ValueError):
        eval_Gd(0, 1.0)
    with pytest.raises(ValueError):
        eval_Gd(1, -0.5)


def test_min_d1_frozen():
    r_star, M = find_min_M(1)
    assert abs(r_star - R_STAR_1) < 1e-9
    assert abs(M - M_1) < 1e-12
    # characterization: tan(r*) = r*, hence G(r*) = cos(r*)
    assert abs(math.tan(r_star) - r_star) < 1e-7
    assert abs(M - math.cos(r_star)) < 1e-12


def test_min_d2_frozen():
    r_star, M = find_min_M(2)
    j21 = jn_zeros(2, 1)[0]
    assert abs(r_star - R_STAR_2) < 1e-9
    assert abs(r_star - j21) < 1e-9
    assert abs(M - M_2) < 1e-12
    assert abs(M - 2.0 * j1(j21) / j21) < 1e-12


def test_derivative_consistency():
    # central differences against the analytic derivative
    for d in (1, 2):
        for r in (0.7, 2.5, 4.0, 7.3):
            eps = 1e-6
            fd = (eval_Gd(d, r + eps) - eval_Gd(d, r - eps)) / (2 * eps)
            assert abs(eval_Gd_prime(d, r) - fd) < 1e-8


def test_taylor_structure():
    samples = np.linspace(0.05, 1.0, 40)
    rep1 = taylor_check(1, samples)
    rep2 = taylor_check(2, samples)
    assert rep1["F_positive"] and rep2["F_positive"]
    # quartic constants approach the next series coefficient
    assert abs(rep1["C_fit"] - 1.0 / 120.0) < 2e-4
    assert abs(rep2["C_fit"] - 1.0 / 192.0) < 2e-4
    # F(r^2) = (1 - G)/r^2 decreases from gamma_d
    assert np.all(rep1["F_values"] < gamma_d(1))
    assert np.all(np.diff(rep1["F_values"]) < 0)


def test_d2_decay_rate():
    # |G_2(r)| <= C r^{-3/2} with C near 2 sqrt(2/pi)
    r = np.linspace(30.0, 300.0, 120)
    assert np.max(np.abs(eval_Gd(2, r)) * r**1.5) < 1.7


def test_multiplier_table_shape():
    tab = multiplier_table(1, [0.0, 1.0, 2.0])
    assert tab.shape == (3, 2)
    assert np.allclose(tab[:, 1], eval_Gd(1, tab[:, 0]))


@settings(max_examples=200, deadline=None)
@given(
    d=st.sampled_from([1, 2]),
    r=st.floats(min_value=0.0, max_value=100.0, allow_nan=False),
)
def test_multiplier_bounded_by_one(d, r):
    # G_d is an average of cos over the unit ball, so |G_d| <= 1 with
    # equality only at r = 0
    g = eval_Gd(d, r)
    assert g <= 1.0 + 1e-14
    assert abs(g) <= 1.0 + 1e-14
    if r > 0.5:
        assert g < 1.0


@settings(max_examples=100, deadline=None)
@given(r=st.floats(min_value=0.0, max_value=50.0, allow_nan=False))
def test_minimum_is_global_d1(r):
    assert eval_Gd(1, r) >= M_1 - 1e-12
