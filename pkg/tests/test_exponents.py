import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from spdelab.analysis.exponents import beta_theory, corollary31_grid, corollary31_objective, epsilon_range
from spdelab.errors import ParameterError


def test_lemma21_value():
    assert beta_theory("lemma21", r=3, theta=4) == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("theta,expected", [(3, 6 / 13), (4, 0.5), (10, 0.5), (1, 2 / 7)])
def test_lemma22_values(theta, expected):
    assert beta_theory("lemma22", theta=theta) == pytest.approx(expected, abs=1e-12)


@given(st.floats(1.0, 4.0), st.floats(0.05, 10.0), st.floats(0.01, 5.0))
def test_lemma21_increasing_in_theta_and_bounded(r, dtheta, step):
    th = r - 1 + dtheta
    b1 = beta_theory("lemma21", r=r, theta=th)
    b2 = beta_theory("lemma21", r=r, theta=th + step)
    # (theta - r + 1) / (2 theta) = 1/2 - (r - 1) / (2 theta): flat at r = 1
    assert 0 < b1 <= b2 + 1e-15 and b2 <= 0.5 + 1e-15
    if r > 1.01:
        assert b1 < b2


def _independent_alphas(eps, p, r, th):
    s = th * (1 - eps)
    gam = (r + 1 - s) / 2
    a1 = eps * (2 * (r - 1) - s) / (2 * (p * th + 1) * (r - 1) - s)
    a2 = 0.0 if th == 2 else eps * (th - 2) / (2 * (1 - p) * th + th - 2)
    a3 = (eps - 2 * (1 - gam)) / (p * th + 1)
    return max(a1, a2, a3)


def _nested_optimum(r, th):
    lo = 1 - min(2 * (r - 1), r + 1) / th
    hi = 1 - (r - 1) / th
    # the max of one increasing and two decreasing functions of p is unimodal
    inner = lambda e: minimize_scalar(lambda p: _independent_alphas(e, p, r, th), bounds=(0, 1),
                                      method="bounded", options={"xatol": 1e-12}).fun
    res = minimize_scalar(lambda e: -(e - inner(e)), bounds=(max(lo, 0), min(hi, 1)), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun, res.x


def test_corollary31_frozen_value():
    # grid value frozen from a 1e-4 grid and confirmed by the nested optimizer below
    value, eps, p = corollary31_grid(3, 6)
    assert value == pytest.approx(0.4444444, abs=1e-6)
    assert 1 / 3 < eps < 2 / 3 and 0 < p < 1


@pytest.mark.parametrize("r,theta", [(3, 6), (2, 3), (2.5, 4)])
def test_corollary31_grid_matches_independent_refinement(r, theta):
    grid, eps, p = corollary31_grid(r, theta)
    nested, eps_n = _nested_optimum(r, theta)
    assert grid == pytest.approx(nested, abs=1e-3)
    # 1e-5 local grid around the nested optimum, built from the independent transcription
    es = eps_n + np.arange(-200, 201) * 1e-5
    lo, hi = epsilon_range("corollary31", r, theta)
    es = es[(es > lo) & (es < hi)]
    ps = np.arange(1, 100000) * 1e-5
    local = max(e - min(_independent_alphas(e, pp, r, theta) for pp in ps[::50]) for e in es[::20])
    assert grid == pytest.approx(local, abs=1e-3)
    assert corollary31_objective(eps, p, r, theta) == pytest.approx(grid)


def test_corollary31_theta_two_sets_alpha2_to_zero():
    value, _, _ = corollary31_grid(1.8, 2.0, resolution=1e-3)
    assert np.isfinite(value)


def test_epsilon_ranges():
    assert epsilon_range("lemma21", 2, 3) == pytest.approx((0.0, 2 / 3))
    assert epsilon_range("corollary31", 3, 6) == pytest.approx((1 / 3, 2 / 3))
    with pytest.raises(ParameterError):
        epsilon_range("corollary31", 1.0, 3)
    with pytest.raises(ParameterError):
        epsilon_range("lemma99", 2, 3)


@pytest.mark.parametrize("kw", [dict(kind="lemma21", r=3, theta=2), dict(kind="lemma21", r=0.5, theta=2),
                                dict(kind="corollary31", r=1, theta=2), dict(kind="lemma21", theta=3),
                                dict(kind="lemma22", theta=0), dict(kind="nope", theta=1)])
def test_beta_theory_rejects(kw):
    with pytest.raises(ParameterError):
        beta_theory(**kw)
