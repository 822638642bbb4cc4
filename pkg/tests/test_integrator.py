import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spdelab import models
from spdelab.errors import ParameterError, ShapeError, StepFailure
from spdelab.integrator import (
    NoiseIncrement, StepperConfig, _hnorm, advance, convergence_probe, simulate_ensemble, simulate_path, step,
    step_residual, time_grid,
)
from spdelab.models import ModelSpec, NoiseSpec
from spdelab.spectral import SpaceConfig

N = 8
states = arrays(np.float64, N, elements=st.floats(-2, 2, allow_nan=False))
CFG = StepperConfig(dt=0.01)


def _pm(r=2.0, c=0.0, family="constant", n=N, **kw):
    return ModelSpec(kind="porous_medium", r=r, c=c, space=SpaceConfig(n_modes=n),
                     noise=NoiseSpec(q=0.6, family=family), **kw)


def test_linear_step_closed_form():
    # r = 1: (1 + h lambda - h c) x' = x + sigma h_scale dW
    m = _pm(r=1.0, c=0.5)
    x = np.linspace(0.4, -0.3, N)
    dW = np.random.default_rng(0).normal(size=N) * 0.1
    b = m.basis
    expected = (x + np.arange(1, N + 1) ** -0.6 * b.h_scale * dW) / (1 + 0.01 * b.lam - 0.01 * 0.5)
    np.testing.assert_allclose(step(m, x, 0.01, dW, CFG), expected, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("m", [_pm(), _pm(r=3.0, c=1.0, family="weyl_example"),
                               ModelSpec(kind="fast_diffusion", r=0.5, space=SpaceConfig(n_modes=N)),
                               ModelSpec(kind="porous_medium", r=2.0, space=SpaceConfig(d=2, gamma=2.0, n_modes=6),
                                         noise=NoiseSpec(q=0.8))])
@pytest.mark.parametrize("seed", range(4))
def test_step_residual_below_tolerance(m, seed):
    rng = np.random.default_rng(seed)
    n = m.space.n_modes
    x = rng.normal(size=n) / np.arange(1, n + 1)
    dW = rng.normal(size=n) * 0.1
    x1 = step(m, x, 0.01, NoiseIncrement(dW), CFG)
    assert step_residual(m, x1, x, 0.01, dW) <= 1e-10


@given(states, states)
def test_implicit_map_is_nonexpansive(a, b):
    # with c = 0 the drift is monotone so the resolvent (I - hA)^-1 contracts in H
    m = _pm()
    out = advance(m, np.stack([a, b]), np.zeros((2, N)), 0.05, CFG)
    assert _hnorm(m, out[0] - out[1]) <= _hnorm(m, a - b) * (1 + 1e-9) + 1e-12


@given(states)
def test_noiseless_energy_decreases(x):
    m = _pm()
    X = x[None]
    e0 = _hnorm(m, X)[0]
    for _ in range(5):
        X = advance(m, X, np.zeros_like(X), 0.02, CFG)
        e1 = _hnorm(m, X)[0]
        assert e1 <= e0 * (1 + 1e-12) + 1e-14
        e0 = e1


def test_energy_inequality_in_mean():
    # E|X_T|^2 <= |x0|^2 + T |B|_HS^2 for additive noise and c = 0
    m = _pm()
    x0 = np.zeros(N)
    x0[0] = 0.5
    T = 0.2
    term = simulate_ensemble(m, x0, T, CFG, 2000, master_seed=4)[0]
    hs2 = float(models.hs_norm(m, np.zeros(N)) ** 2)
    bound = _hnorm(m, x0[None])[0] ** 2 + T * hs2
    energy = _hnorm(m, term) ** 2
    assert energy.mean() <= bound + 3 * energy.std() / math.sqrt(energy.size)


def test_sup_moment_bound_with_fitted_constant():
    m = _pm(c=0.5, family="weyl_example", trunc_radius=1.0)
    x0 = np.zeros(N)
    x0[0] = 0.8
    T_list = [0.1, 0.2, 0.4]
    x2 = _hnorm(m, x0[None])[0] ** 2
    ratios = []
    for T in T_list:
        _, sup = simulate_ensemble(m, x0, T, CFG, 1000, master_seed=6, track_sup=True)
        ratios.append(sup.mean() / (T + x2))
    # smallest C with E sup|X|^2 <= C (1 + e^{CT}) (T + |x0|^2) at every horizon
    C = next(C for C in np.linspace(0.01, 50, 5000)
             if all(r <= C * (1 + math.exp(C * T)) for r, T in zip(ratios, T_list)))
    assert C < 5.0


def test_simulate_path_deterministic_and_matches_ensemble():
    m = _pm(family="weyl_example")
    x0 = np.full(N, 0.1)
    a = simulate_path(m, x0, 0.1, CFG, substream_id=3, master_seed=9)
    b = simulate_path(m, x0, 0.1, CFG, substream_id=3, master_seed=9)
    np.testing.assert_array_equal(a, b)
    # batching changes BLAS kernels, so only rounding-level agreement is expected here
    ens = simulate_ensemble(m, x0, 0.1, CFG, 5, master_seed=9)
    np.testing.assert_allclose(ens[0, 3], a, rtol=0, atol=1e-13)


def test_simulate_path_trajectory_times():
    m = _pm()
    term, times, states_ = simulate_path(m, np.zeros(N), 0.105, CFG, 0, 0, save_stride=5)
    np.testing.assert_allclose(times, [0.0, 0.05, 0.1, 0.105])
    np.testing.assert_array_equal(states_[-1], term)


@pytest.mark.parametrize("threads", [1, 3])
def test_ensemble_independent_of_threads_and_blocks(threads):
    m = _pm()
    starts = np.zeros((2, N))
    starts[1, 0] = 1.0
    big = simulate_ensemble(m, starts, 0.05, CFG, 600, master_seed=2, threads=threads)
    small = simulate_ensemble(m, starts, 0.05, CFG, 300, master_seed=2)
    np.testing.assert_array_equal(big[:, :300], small)
    shifted = simulate_ensemble(m, starts, 0.05, CFG, 300, master_seed=2, substream_offset=300)
    np.testing.assert_array_equal(big[:, 300:], shifted)


def test_cg_and_dense_agree():
    m = _pm(r=3.0)
    rng = np.random.default_rng(1)
    X = rng.normal(size=(6, N)) / np.arange(1, N + 1)
    dB = rng.normal(size=(6, N)) * 0.1
    dense = advance(m, X, dB, 0.01, CFG)
    cg = advance(m, X, dB, 0.01, StepperConfig(dt=0.01, linear_solver="cg"))
    np.testing.assert_allclose(cg, dense, atol=1e-9)


def test_tamed_explicit_stays_finite_and_close_for_small_steps():
    m = _pm()
    x0 = np.zeros(N)
    x0[0] = 0.3
    tamed = simulate_path(m, x0, 0.05, StepperConfig(scheme="tamed_explicit", dt=1e-5), 0, 1)
    implicit = simulate_path(m, x0, 0.05, StepperConfig(dt=1e-5), 0, 1)
    assert np.all(np.isfinite(tamed))
    assert _hnorm(m, (tamed - implicit)[None])[0] < 1e-2


def test_convergence_probe_linear_errors_shrink():
    m = _pm(r=1.0)
    res = convergence_probe(m, np.zeros(N), 0.08, [0.02, 0.01, 0.005], 200, CFG, master_seed=1)
    assert res.errors[-1] == 0.0
    assert res.errors[0] > res.errors[1] > 0
    assert 0.2 < res.slope < 1.5


def test_step_failure_when_halving_exhausted():
    m = _pm(r=3.0)
    x = np.zeros(N)
    x[0] = 50.0
    cfg = StepperConfig(dt=0.5, newton_max_iter=1, dt_min=0.3)
    with pytest.raises(StepFailure):
        step(m, x, 0.5, np.zeros(N), cfg)


def test_halving_recovers_from_hard_step():
    m = _pm(r=3.0)
    x = np.zeros(N)
    x[0] = 20.0
    cfg = StepperConfig(dt=0.5, newton_max_iter=9)
    x1 = step(m, x, 0.5, np.zeros(N), cfg)
    assert np.all(np.isfinite(x1)) and _hnorm(m, x1[None])[0] < _hnorm(m, x[None])[0]


def test_time_grid():
    np.testing.assert_allclose(time_grid(0.105, 0.01)[-1], 0.005)
    assert time_grid(0.1, 0.01).size == 10
    assert time_grid(0.0, 0.01).size == 0
    with pytest.raises(ParameterError):
        time_grid(-1.0, 0.1)


@pytest.mark.parametrize("kw", [dict(scheme="rk4"), dict(dt=0.0), dict(dt_min=0.5, dt=0.1), dict(newton_tol=0.0),
                                dict(newton_max_iter=0), dict(linear_solver="lu")])
def test_stepper_config_rejects(kw):
    with pytest.raises(ParameterError):
        StepperConfig(**kw)


def test_step_shape_errors():
    m = _pm()
    with pytest.raises(ShapeError):
        step(m, np.zeros(N), 0.01, np.zeros(N + 1), CFG)
    with pytest.raises(ShapeError):
        step(m, np.zeros(N + 1), 0.01, np.zeros(N), CFG)


def test_trivial_examples():
    m = _pm()
    np.testing.assert_array_equal(step(m, np.zeros(N), 0.01, np.zeros(N), CFG), 0.0)
    x0 = np.linspace(0.1, 0.2, N)
    np.testing.assert_array_equal(simulate_path(m, x0, 0.0, CFG, 0, 0), x0)


def test_cubic_step_dissipative():
    m = _pm(r=3.0)
    x = np.zeros(N)
    x[0] = 1.0
    x1 = step(m, x, 1e-3, np.zeros(N), StepperConfig(dt=1e-3))
    assert step_residual(m, x1, x, 1e-3, np.zeros(N)) <= 1e-10
    assert float(((x1 - x) * x1 * m.basis.h_weight).sum()) <= 0


@pytest.mark.parametrize("c", [0.0, -0.5, -3.0])
def test_linear_single_mode_contraction(c):
    m = ModelSpec(kind="porous_medium", r=1.0, c=c, space=SpaceConfig(n_modes=1), noise=NoiseSpec(q=0.6))
    for x in (-2.0, 0.3, 5.0):
        assert abs(step(m, np.array([x]), 0.01, np.zeros(1), CFG)[0]) <= abs(x)


def test_discrete_energy_inequality():
    # |x'|^2 <= |x|^2 + dt c1 over 1000 sampled noiseless steps, c1 from the coercivity fit
    from spdelab.conditions import _coercivity

    m = _pm(c=-0.5, family="weyl_example")
    X = np.random.default_rng(2).normal(size=(1000, N)) / np.arange(1, N + 1)
    c1 = _coercivity(m, X)["c1"]
    X1 = advance(m, X, np.zeros_like(X), 0.01, CFG)
    assert np.all(_hnorm(m, X1) ** 2 <= _hnorm(m, X) ** 2 + 0.01 * c1)


def test_porous_errors_strictly_decrease():
    m = _pm(family="weyl_example", trunc_radius=1.0)
    x0 = np.zeros(N)
    x0[0] = 0.5
    res = convergence_probe(m, x0, 0.1, [0.02, 0.01, 0.005, 0.0025], 200, CFG, master_seed=3)
    assert np.all(np.diff(res.errors) < 0) and res.errors[-1] == 0.0


def test_non_finite_input_raises():
    from spdelab.errors import NumericalDomainError

    x = np.zeros(N)
    x[2] = np.nan
    with pytest.raises(NumericalDomainError):
        step(_pm(), x, 0.01, np.zeros(N), CFG)
