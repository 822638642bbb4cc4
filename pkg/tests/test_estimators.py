import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdelab.analysis.estimators import (
    EstimateResult, TestFunction, clopper_pearson, coupling_bound_audit, ergodic_average, holder_fit,
    irreducibility_probe, mc_gap, mc_gaps,
)
from spdelab.coupling import CouplingConfig
from spdelab.errors import InsufficientDataError, ParameterError
from spdelab.integrator import StepperConfig
from spdelab.models import ModelSpec, NoiseSpec
from spdelab.spectral import SpaceConfig, h_unit_vector

N = 8
STEP = StepperConfig(dt=2e-3)
PM = ModelSpec(kind="porous_medium", r=2.0, space=SpaceConfig(n_modes=N), noise=NoiseSpec(q=0.6))
E1 = h_unit_vector(1, PM.space)


def test_test_functions_bounded_by_one():
    X = np.random.default_rng(0).normal(size=(200, N)) * 20
    for f in (TestFunction("tanh_mode", 2), TestFunction("cosine_mode", 1, k=3.0),
              TestFunction("ball_indicator", center=(0.1,), radius=0.5)):
        v = f(PM, X)
        assert v.shape == (200,) and np.all(np.abs(v) <= f.sup_norm)


def test_test_function_uses_h_coordinate():
    assert TestFunction("tanh_mode", 1)(PM, 0.5 * E1) == pytest.approx(math.tanh(0.5))
    ball = TestFunction("ball_indicator", radius=0.5)
    assert ball(PM, 0.5 * E1) == 1.0 and ball(PM, 0.51 * E1) == 0.0


@pytest.mark.parametrize("kw", [dict(kind="sin"), dict(j=0), dict(kind="ball_indicator", radius=0)])
def test_test_function_rejects(kw):
    with pytest.raises(ParameterError):
        TestFunction(**kw)


def test_identical_starts_give_exact_zero():
    x = 0.3 * E1
    est = mc_gap(PM, TestFunction(), x, x, 0.05, 200, STEP, master_seed=1)
    assert est.mean == 0.0 and est.std_error == 0.0


def test_constant_function_gives_zero():
    est = mc_gap(PM, TestFunction("cosine_mode", k=0.0), 0 * E1, 0.3 * E1, 0.05, 200, STEP, master_seed=1)
    assert est.mean == 0.0


def test_seed_provenance_and_ci():
    est = mc_gap(PM, TestFunction(), 0 * E1, 0.2 * E1, 0.02, 150, STEP, master_seed=7, substream_offset=10)
    assert est.seed_provenance == (7, 10, 160) and est.n_samples == 150
    lo, hi = est.ci
    assert lo < est.mean < hi
    assert hi - est.mean == pytest.approx(2.5758293 * est.std_error, rel=1e-6)


def test_mc_gaps_share_the_x_paths():
    ys = np.stack([0.1 * E1, 0.2 * E1])
    both = mc_gaps(PM, TestFunction(), 0 * E1, ys, 0.04, 200, STEP, master_seed=3)
    alone = mc_gap(PM, TestFunction(), 0 * E1, ys[1], 0.04, 200, STEP, master_seed=3)
    assert both[1].mean == pytest.approx(alone.mean, abs=1e-13)


@pytest.mark.parametrize("seed", range(50))
def test_paired_estimator_consistent_between_m_and_2m(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=N) * 0.3 / np.arange(1, N + 1)
    y = x + rng.normal(size=N) * 0.2 / np.arange(1, N + 1)
    f = TestFunction("tanh_mode", int(rng.integers(1, 3)))
    a = mc_gap(PM, f, x, y, 0.02, 100, StepperConfig(dt=0.004), master_seed=seed)
    b = mc_gap(PM, f, x, y, 0.02, 200, StepperConfig(dt=0.004), master_seed=seed)
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.std_error, b.std_error) + 1e-12


def test_mc_gap_needs_enough_samples():
    with pytest.raises(ParameterError):
        mc_gap(PM, TestFunction(), E1, E1, 0.1, 50, STEP, 0)


@given(st.floats(0.05, 1.0), st.floats(0.1, 10.0))
def test_holder_fit_recovers_exact_power(beta, C):
    d = 0.2 * 2.0 ** -np.arange(5)
    fit = holder_fit([(di, C * di**beta) for di in d])
    assert fit.beta == pytest.approx(beta, abs=1e-9)
    assert fit.intercept == pytest.approx(math.log(C), abs=1e-8)
    assert fit.n_used == 5 and fit.excluded == []


def test_holder_fit_excludes_noisy_and_zero_points():
    pts = [(0.2, EstimateResult(0.1, 0.001, 100)), (0.1, EstimateResult(0.07, 0.001, 100)),
           (0.05, EstimateResult(0.05, 0.001, 100)), (0.025, EstimateResult(0.01, 0.004, 100)),
           (0.0125, 0.0)]
    fit = holder_fit(pts)
    assert fit.n_used == 3 and fit.excluded == [0.025, 0.0125]
    assert fit.ci_low < fit.beta < fit.ci_high


def test_holder_fit_insufficient():
    with pytest.raises(InsufficientDataError):
        holder_fit([(0.2, 0.1), (0.1, 0.05), (0.05, 0.0)])


def test_clopper_pearson_edges():
    lo, hi = clopper_pearson(0, 10, 0.99)
    assert lo == 0.0 and hi == pytest.approx(1 - 0.005 ** (1 / 10))
    lo, hi = clopper_pearson(10, 10, 0.99)
    assert hi == 1.0 and lo == pytest.approx(0.005 ** (1 / 10))
    lo, hi = clopper_pearson(5, 10, 0.95)
    assert lo == pytest.approx(0.18708603, abs=1e-7) and hi == pytest.approx(0.81291397, abs=1e-7)


def test_irreducibility_positive_near_start():
    res = irreducibility_probe(PM, 0.2 * E1, 0.2 * E1, 5.0, 0.05, 300, STEP, master_seed=1)
    assert res.hits == 300 and res.verdict == "POSITIVE"
    assert res.estimate.seed_provenance == (1, 0, 300)


def test_irreducibility_inconclusive_when_unreachable():
    res = irreducibility_probe(PM, 0 * E1, 50 * E1, 1e-3, 0.05, 100, STEP, master_seed=1)
    assert res.hits == 0 and res.verdict == "INCONCLUSIVE" and res.ci_low == 0.0


def test_irreducibility_rejects_degenerate_noise():
    weyl = ModelSpec(kind="porous_medium", r=2.0, space=SpaceConfig(n_modes=N),
                     noise=NoiseSpec(q=0.6, family="weyl_example"))
    with pytest.raises(ParameterError, match="lower bound"):
        irreducibility_probe(weyl, np.zeros(N), np.zeros(N), 0.1, 0.1, 10, STEP, 0)
    with pytest.raises(ParameterError):
        irreducibility_probe(PM, np.zeros(N), np.zeros(N), 0.0, 0.1, 10, STEP, 0)


def test_ergodic_identical_starts_and_streams_agree_exactly():
    starts = np.stack([0.3 * E1, 0.3 * E1])
    res = ergodic_average(PM, TestFunction(), starts, 2.0, 0.5, 5, STEP, master_seed=2, substreams=[4, 4],
                          n_batches=10)
    assert res.averages[0].mean == res.averages[1].mean
    assert np.all(res.pairwise_z == 0) and res.verdict == "PASS"


def test_ergodic_different_starts_forget_initial_state():
    starts = np.stack([np.zeros(N), 0.8 * E1])
    res = ergodic_average(PM, TestFunction(), starts, 20.0, 2.0, 5, StepperConfig(dt=5e-3), master_seed=2,
                          n_batches=10)
    assert res.verdict == "PASS"
    assert res.averages[0].seed_provenance == (2, 0, 1)


def test_ergodic_guards():
    with pytest.raises(ParameterError):
        ergodic_average(ModelSpec(c=1.0, space=SpaceConfig(n_modes=N)), TestFunction(), np.zeros(N), 1.0, 0.1, 1,
                        STEP, 0)
    with pytest.raises(ParameterError):
        ergodic_average(PM, TestFunction(), np.zeros(N), 1.0, 1.0, 1, STEP, 0)
    with pytest.raises(InsufficientDataError):
        ergodic_average(PM, TestFunction(), np.zeros(N), 0.1, 0.0, 10, STEP, 0)


def test_small_audit_passes():
    cc = CouplingConfig(epsilon=0.5, theta=3.0, stepper=STEP)
    rec = coupling_bound_audit(PM, TestFunction(), 0 * E1, 0.1 * E1, 0.1, 200, cc, master_seed=4)
    assert rec.verdict == "PASS"
    assert rec.rhs >= rec.p_tau_ge_T and 0 <= rec.cap_fraction < 0.01
    assert rec.batch.tau.size == 200


def test_holder_fit_constant_gaps_give_zero_slope():
    fit = holder_fit([(d, 0.3) for d in (0.2, 0.1, 0.05, 0.025)])
    assert fit.beta == pytest.approx(0.0, abs=1e-12)


def test_audit_identical_starts_and_constant_f():
    cc = CouplingConfig(epsilon=0.5, theta=3.0, stepper=STEP)
    same = coupling_bound_audit(PM, TestFunction(), 0.1 * E1, 0.1 * E1, 0.05, 100, cc, master_seed=1)
    assert same.lhs == 0.0 and same.rhs == 0.0 and same.p_tau_ge_T == 0.0
    const = coupling_bound_audit(PM, TestFunction("cosine_mode", k=0.0), 0 * E1, 0.1 * E1, 0.05, 100, cc,
                                 master_seed=1)
    assert const.lhs == 0.0 and const.verdict == "PASS"


def test_ergodic_constant_function():
    starts = np.stack([np.zeros(N), 0.5 * E1])
    res = ergodic_average(PM, TestFunction("cosine_mode", k=0.0), starts, 1.0, 0.2, 2, STEP, master_seed=0,
                          n_batches=5)
    assert all(a.mean == 1.0 for a in res.averages)
