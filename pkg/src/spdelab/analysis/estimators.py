"""Monte Carlo estimators for semigroup gaps, Hölder fits, coupling audits,
hitting probabilities and long-run averages.

Every estimator records the seeds it consumed in ``seed_provenance`` as
``(master_seed, first_substream, last_substream_exclusive)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .. import models
from ..coupling import CouplingConfig, run_couplings
from ..errors import InsufficientDataError, ParameterError
from ..integrator import StepperConfig, _hnorm, advance, simulate_ensemble, time_grid
from ..models import ModelSpec
from ..rng import BlockNoise
from ..spectral import check_vector, pad

TEST_FUNCTION_KINDS = ("cosine_mode", "tanh_mode", "ball_indicator")
# second substream range for audits, far from anything mc_gap uses
AUDIT_OFFSET = 1 << 40


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function on H^gamma with ``sup |f| = 1``.

    Mode functions act on the H-orthonormal coordinate
    ``a_j = lambda_j^(-gamma/2) c_j`` of the state along ``e_j``:
    ``cosine_mode`` is ``cos(k a_j)``, ``tanh_mode`` is ``tanh(a_j)``.
    ``ball_indicator`` is 1 on the closed H^gamma ball around ``center``
    (coefficients, zero-padded) of radius ``radius``.
    """

    __test__ = False  # not a pytest class

    kind: str = "tanh_mode"
    j: int = 1
    k: float = 1.0
    center: tuple = ()
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind not in TEST_FUNCTION_KINDS:
            raise ParameterError(f"test function kind must be one of {TEST_FUNCTION_KINDS}, got {self.kind!r}")
        if int(self.j) != self.j or self.j < 1:
            raise ParameterError(f"test function mode j must be a positive integer, got {self.j}")
        if self.kind == "ball_indicator" and not self.radius > 0:
            raise ParameterError(f"ball radius must be > 0, got {self.radius}")

    @property
    def sup_norm(self):
        return 1.0

    def __call__(self, m: ModelSpec, X):
        X = np.asarray(X, dtype=float)
        if self.kind == "ball_indicator":
            c = pad(self.center, m.space)
            return (_hnorm(m, np.atleast_2d(X - c)) <= self.radius).astype(float).reshape(X.shape[:-1])
        if self.j > m.space.n_modes:
            raise ParameterError(f"mode {self.j} outside 1..{m.space.n_modes}")
        a = X[..., self.j - 1] / m.basis.h_scale[self.j - 1]
        if self.kind == "cosine_mode":
            return np.cos(self.k * a)
        return np.tanh(a)


@dataclass
class EstimateResult:
    mean: float
    std_error: float
    n_samples: int
    ci_level: float = 0.99
    seed_provenance: tuple = ()

    @property
    def ci(self):
        z = stats.norm.ppf(0.5 + self.ci_level / 2)
        return self.mean - z * self.std_error, self.mean + z * self.std_error


def _paired(diff, seed, lo, hi):
    n = diff.size
    se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return EstimateResult(mean=abs(float(diff.mean())), std_error=se, n_samples=n,
                          seed_provenance=(int(seed), int(lo), int(hi)))


def mc_gaps(m: ModelSpec, f: TestFunction, x, ys, T, M, stepper: StepperConfig, master_seed,
            substream_offset=0, threads=1):
    """``|P_T f(x) - P_T f(y)|`` for each ``y`` in ``ys``, all driven by the same noise."""
    if M < 100:
        raise ParameterError(f"mc_gap needs M >= 100, got {M}")
    x = check_vector(x, m.space, "x")
    ys = check_vector(np.atleast_2d(ys), m.space, "ys")
    term = simulate_ensemble(m, np.vstack([x[None], ys]), T, stepper, M, master_seed,
                             substream_offset=substream_offset, threads=threads)
    fx = f(m, term[0])
    return [_paired(fx - f(m, term[i]), master_seed, substream_offset, substream_offset + M)
            for i in range(1, term.shape[0])]


def mc_gap(m: ModelSpec, f: TestFunction, x, y, T, M, stepper: StepperConfig, master_seed,
           substream_offset=0, threads=1) -> EstimateResult:
    """Common-random-number estimate of ``|P_T f(x) - P_T f(y)|`` with paired standard error."""
    return mc_gaps(m, f, x, np.atleast_2d(y), T, M, stepper, master_seed, substream_offset, threads)[0]


@dataclass
class HolderFit:
    beta: float
    ci_low: float
    ci_high: float
    intercept: float
    n_used: int
    excluded: list = field(default_factory=list)
    ci_level: float = 0.99


def holder_fit(gaps, ci_level=0.99) -> HolderFit:
    """Least-squares slope of ``log gap`` against ``log distance``.

    ``gaps`` holds ``(distance, estimate)`` pairs where the estimate is an
    :class:`EstimateResult` or a plain number. Zero gaps and gaps with
    ``std_error >= gap / 3`` are excluded; at least three points must remain.
    """
    d, g, excluded = [], [], []
    for dist, est in gaps:
        val = est.mean if isinstance(est, EstimateResult) else float(est)
        se = est.std_error if isinstance(est, EstimateResult) else 0.0
        if not dist > 0 or not val > 0 or not se < val / 3:
            excluded.append(float(dist))
            continue
        d.append(float(dist))
        g.append(val)
    if len(d) < 3:
        raise InsufficientDataError(f"holder_fit needs 3 usable points, got {len(d)}")
    lx, ly = np.log(d), np.log(g)
    res = stats.linregress(lx, ly)
    dof = len(d) - 2
    half = stats.t.ppf(0.5 + ci_level / 2, dof) * res.stderr if dof > 0 else float("inf")
    return HolderFit(beta=float(res.slope), ci_low=float(res.slope - half), ci_high=float(res.slope + half),
                     intercept=float(res.intercept), n_used=len(d), excluded=excluded, ci_level=ci_level)


@dataclass
class AuditRecord:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    margin: float
    pooled_se: float
    mean_abs_1_minus_R: float
    p_tau_ge_T: float
    p_tau_se: float
    mean_weight: float
    mean_weight_se: float
    cap_fraction: float
    batch: object = None

    @property
    def verdict(self):
        return "PASS" if self.margin >= -3 * self.pooled_se else "FAIL"


def coupling_bound_audit(m: ModelSpec, f: TestFunction, x, y, T, M, ccfg: CouplingConfig, master_seed,
                         threads=1) -> AuditRecord:
    """Compare the gap ``|P_T f(x) - P_T f(y)|`` with ``|f| (E|1 - R_T| + P(tau >= T))``.

    The gap uses substreams ``0..M-1``; the coupled runs use an independent
    range starting at ``AUDIT_OFFSET``. ``margin = |f| rhs - lhs``.
    """
    ccfg = replace(ccfg, T=T)
    lhs = mc_gap(m, f, x, y, T, M, ccfg.stepper, master_seed, threads=threads)
    batch = run_couplings(m, x, y, ccfg, M, master_seed, substream_offset=AUDIT_OFFSET, threads=threads)
    w = np.exp(batch.logR_T)
    miss = ~np.isfinite(batch.tau)
    per = np.abs(1 - w) + miss
    rhs = float(per.mean())
    rhs_se = float(per.std(ddof=1) / math.sqrt(M))
    pooled = math.hypot(lhs.std_error, rhs_se)
    total = max(int(batch.steps.sum()), 1)
    return AuditRecord(
        lhs=lhs.mean, lhs_se=lhs.std_error, rhs=rhs, rhs_se=rhs_se,
        margin=f.sup_norm * rhs - lhs.mean, pooled_se=pooled,
        mean_abs_1_minus_R=float(np.abs(1 - w).mean()),
        p_tau_ge_T=float(miss.mean()), p_tau_se=float(miss.std(ddof=1) / math.sqrt(M)),
        mean_weight=float(w.mean()), mean_weight_se=float(w.std(ddof=1) / math.sqrt(M)),
        cap_fraction=float(batch.cap_events.sum()) / total, batch=batch)


@dataclass
class IrreducibilityResult:
    estimate: EstimateResult
    hits: int
    ci_low: float
    ci_high: float

    @property
    def verdict(self):
        return "POSITIVE" if self.ci_low > 0 else "INCONCLUSIVE"


def clopper_pearson(k, n, level=0.99):
    a = 1 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def irreducibility_probe(m: ModelSpec, x, y, radius, T, M, stepper: StepperConfig, master_seed,
                         substream_offset=0, threads=1, ci_level=0.99) -> IrreducibilityResult:
    """Frequency of ``|X^x(T) - y| <= radius`` with an exact binomial interval."""
    if not radius > 0:
        raise ParameterError(f"radius must be > 0, got {radius}")
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    if not models.rho_lower_bound(m) > 0:
        raise ParameterError("irreducibility probe needs a noise family with a positive lower bound on b_j^2")
    x = check_vector(x, m.space, "x")
    y = check_vector(y, m.space, "y")
    term = simulate_ensemble(m, x[None], T, stepper, M, master_seed,
                             substream_offset=substream_offset, threads=threads)[0]
    hit = _hnorm(m, term - y) <= radius
    k = int(hit.sum())
    lo, hi = clopper_pearson(k, M, ci_level)
    p = k / M
    est = EstimateResult(mean=p, std_error=math.sqrt(p * (1 - p) / M), n_samples=M, ci_level=ci_level,
                         seed_provenance=(int(master_seed), int(substream_offset), int(substream_offset + M)))
    return IrreducibilityResult(estimate=est, hits=k, ci_low=lo, ci_high=hi)


@dataclass
class ErgodicResult:
    averages: list
    pairwise_z: np.ndarray

    @property
    def verdict(self):
        return "PASS" if np.all(np.abs(self.pairwise_z) <= 3) else "FAIL"


def ergodic_average(m: ModelSpec, f: TestFunction, x_list, T_long, burn_in, stride, stepper: StepperConfig,
                    master_seed, substreams=None, n_batches=20) -> ErgodicResult:
    """Time average of ``f`` along one long path per start, with batch-means standard errors.

    Start ``i`` uses substream ``substreams[i]`` (default ``i``). ``f`` is
    sampled every ``stride`` steps after ``burn_in``.
    """
    if m.c > 0:
        raise ParameterError(f"ergodic_average needs a dissipative model (c <= 0), got c={m.c}")
    if not 0 <= burn_in < T_long:
        raise ParameterError(f"need 0 <= burn_in < T_long, got burn_in={burn_in}, T_long={T_long}")
    if int(stride) != stride or stride < 1:
        raise ParameterError(f"stride must be a positive integer, got {stride}")
    X = check_vector(np.atleast_2d(x_list), m.space, "x_list").copy()
    S = X.shape[0]
    ids = list(range(S)) if substreams is None else [int(s) for s in substreams]
    if len(ids) != S:
        raise ParameterError("substreams must have one entry per start")
    noise = BlockNoise(master_seed, ids, m.space.n_modes)
    samples = []
    t = 0.0
    for k, h in enumerate(time_grid(T_long, stepper.dt)):
        X = advance(m, X, math.sqrt(h) * noise.next(), h, stepper)
        t += h
        if t > burn_in + 1e-12 and (k + 1) % stride == 0:
            samples.append(f(m, X))
    if len(samples) < 2 * n_batches:
        raise InsufficientDataError(f"only {len(samples)} samples after burn-in for {n_batches} batches")
    vals = np.array(samples)  # (n_samples, S)
    nb = vals.shape[0] // n_batches
    means = vals[: nb * n_batches].reshape(n_batches, nb, S).mean(axis=1)
    avgs = []
    for i in range(S):
        se = float(means[:, i].std(ddof=1) / math.sqrt(n_batches))
        avgs.append(EstimateResult(mean=float(vals[:, i].mean()), std_error=se, n_samples=vals.shape[0],
                                   seed_provenance=(int(master_seed), ids[i], ids[i] + 1)))
    z = np.zeros((S, S))
    for i in range(S):
        for j in range(i + 1, S):
            pooled = math.hypot(avgs[i].std_error, avgs[j].std_error)
            diff = avgs[i].mean - avgs[j].mean
            z[i, j] = z[j, i] = 0.0 if diff == 0 else (diff / pooled if pooled > 0 else math.inf)
    return ErgodicResult(averages=avgs, pairwise_z=z)
