"""Coupling by change of measure for a pair of Galerkin paths.

``X`` follows the base dynamics from ``x``. ``Y`` starts at ``y``, shares
the noise of ``X`` and carries the extra drift
``|x - y|^alpha (X - Y) / |X - Y|^epsilon`` (norms in H^gamma) until the
pair meets. The Girsanov density that removes the extra drift is tracked
as a log-weight, together with the functionals

* ``I_theta = int |X - Y|_B0^theta / |X - Y|^(theta epsilon) dt``
* ``quad_var = int |theta_s|^2 ds``, the quadratic variation of the
  log-weight martingale, where ``B(Y) theta_s`` equals the applied extra drift.

With ``theta_s`` defined that way, ``W~ = W + int theta ds`` is a Brownian
motion under ``R P`` for ``R = exp(-int <theta, dW> - quad_var / 2)``, so
``E[R f(Y_T)]`` is the semigroup from ``y``. The same identity holds exactly
for the discrete chain because ``theta`` is frozen at the left point.

Near the meeting time the extra drift is stiff (its rate grows like
``|X - Y|^-epsilon``), so each base step is split into ``2**k`` Brownian-bridge
sub-steps with ``k`` chosen from the current gap; the bridge draws come from
a per-step auxiliary stream, leaving the main stream untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import models
from .errors import ParameterError
from .integrator import StepperConfig, _hnorm, advance, time_grid
from .models import ModelSpec
from .parallel import map_blocks
from .rng import BlockNoise, bridge_stream, brownian_bridge
from .spectral import check_vector

COUPLING_MODES = ("lemma21", "lemma22", "free")
# a single explicit sub-step may close at most this fraction of the current gap
MAX_GAP_FRACTION = 0.5
# sub-steps are sized for this fraction so the shrinking gap rarely reaches the limiter
TARGET_GAP_FRACTION = 0.125


@dataclass(frozen=True)
class CouplingConfig:
    """Parameters of the coupled pair.

    ``alpha=None`` selects :func:`default_alpha` once the model exponent ``r``
    is known (see :meth:`resolve`).
    """

    alpha: float | None = None
    epsilon: float = 0.5
    theta: float = 3.0
    T: float = 1.0
    couple_tol: float = 1e-8
    drift_cap: float = 1e6
    stepper: StepperConfig = field(default_factory=StepperConfig)
    mode: str = "lemma21"

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ParameterError("; ".join(problems))

    def violations(self, r=None):
        out = []
        eps = self.epsilon
        if not 0 < eps < 1:
            out.append(f"coupling.epsilon must lie in (0, 1), got {eps}")
        if self.alpha is not None and not 0 < self.alpha < eps:
            out.append(f"coupling.alpha must satisfy 0 < alpha < epsilon, got alpha={self.alpha}, epsilon={eps}")
        if not self.theta > 0:
            out.append(f"coupling.theta must be > 0, got {self.theta}")
        if not self.T > 0:
            out.append(f"coupling.T must be > 0, got {self.T}")
        if not self.couple_tol > 0:
            out.append(f"coupling.couple_tol must be > 0, got {self.couple_tol}")
        if not self.drift_cap > 0:
            out.append(f"coupling.drift_cap must be > 0, got {self.drift_cap}")
        if self.mode not in COUPLING_MODES:
            out.append(f"coupling.mode must be one of {COUPLING_MODES}, got {self.mode!r}")
        elif self.mode == "lemma22" and 0 < eps < 1 and abs(eps - self.theta / (self.theta + 2)) > 1e-12:
            out.append(f"lemma22 mode needs epsilon = theta/(theta+2) = {self.theta / (self.theta + 2):.6g}, got {eps}")
        elif self.mode == "lemma21" and r is not None and 0 < eps < 1:
            lo, hi = max(0.0, r - 1), min(2 * r, r + 1)
            s = self.theta * (1 - eps)
            if not lo < s < hi:
                out.append(f"lemma21 mode needs theta*(1-epsilon) in ({lo:g}, {hi:g}), got {s:g}")
        return out

    def resolve(self, r):
        """Return a copy with ``alpha`` filled in, validating the ``r``-dependent ranges."""
        problems = self.violations(r)
        if problems:
            raise ParameterError("; ".join(problems))
        if self.alpha is not None:
            return self
        return replace(self, alpha=default_alpha(r, self.theta, self.epsilon))


def default_alpha(r, theta, epsilon):
    """``epsilon/2 - (1 - g)/theta`` with ``2 g = r + 1 - theta (1 - epsilon)``, or ``epsilon/2`` if that is not positive."""
    g = 0.5 * (r + 1 - theta * (1 - epsilon))
    a = 0.5 * epsilon - (1 - g) / theta
    return a if 0 < a < epsilon else 0.5 * epsilon


@dataclass
class CouplingOutcome:
    """Result of one coupled run; ``tau`` is ``math.inf`` when the pair has not met by ``T``."""

    tau: float
    logR_T: float
    I_theta: float
    quad_var: float
    X_T: np.ndarray
    Y_T: np.ndarray
    cap_events: int = 0
    steps: int = 0

    @property
    def coupled(self):
        return math.isfinite(self.tau)


def _b0_norm(m, delta):
    b = m.basis
    return np.sqrt((delta * delta * b.h_weight * b.index ** (2 * m.noise.q)).sum(axis=-1))


def _extra_drift(m, X, Y, h, g, ccfg):
    """Applied extra drift for rows of a pair, plus gap norms and a limiter flag."""
    delta = X - Y
    dn = _hnorm(m, delta)
    safe = np.where(dn > 0, dn, 1.0)
    size = np.where(dn > 0, g * safe ** (1.0 - ccfg.epsilon), 0.0)
    limit = np.minimum(ccfg.drift_cap, MAX_GAP_FRACTION * dn / h)
    capped = size > limit
    size = np.minimum(size, limit)
    D = (size / safe)[:, None] * delta
    return D, delta, dn, capped


def _coupled_advance(m, X, Y, dB, h, ccfg, g):
    """One step for rows of uncoupled pairs.

    Returns ``X', Y', dlogR, dI, dQ, capped``.
    """
    D, delta, dn, capped = _extra_drift(m, X, Y, h, g, ccfg)
    th = D / (models._checked_sigma(m, Y) * m.basis.h_scale)
    thsq = (th * th).sum(axis=1)
    dlogR = -(th * dB).sum(axis=1) - 0.5 * h * thsq
    safe = np.where(dn > 0, dn, 1.0)
    dI = np.where(dn > 0, _b0_norm(m, delta) ** ccfg.theta / safe ** (ccfg.theta * ccfg.epsilon), 0.0) * h
    M = X.shape[0]
    both = advance(m, np.concatenate([X, Y]), np.concatenate([dB, dB]), h, ccfg.stepper,
                   extra=np.concatenate([np.zeros_like(D), D]))
    return both[:M], both[M:], dlogR, dI, thsq * h, capped


def coupled_step(m: ModelSpec, X, Y, dt, dW, ccfg: CouplingConfig, start_gap):
    """Advance one uncoupled pair by ``dt`` with shared increment ``dW``.

    Returns ``(X', Y', dlogR, {"I_theta": ..., "quad_var": ..., "capped": ...})``.
    ``start_gap`` is ``|x - y|`` of the original starts; ``ccfg.alpha`` must be set.
    """
    if ccfg.alpha is None:
        raise ParameterError("coupled_step needs an explicit alpha; call CouplingConfig.resolve(r) first")
    X = check_vector(X, m.space, "X")
    Y = check_vector(Y, m.space, "Y")
    dW = check_vector(dW, m.space, "dW")
    if X.ndim != 1 or Y.ndim != 1 or dW.ndim != 1:
        raise ParameterError("coupled_step takes single vectors")
    if start_gap < 0:
        raise ParameterError(f"start_gap must be >= 0, got {start_gap}")
    if start_gap > 0 and np.array_equal(X, Y):
        raise ParameterError("pair already coupled (X == Y); declare coupling instead of stepping")
    g = np.array([start_gap**ccfg.alpha if start_gap > 0 else 0.0])
    Xn, Yn, dlogR, dI, dQ, capped = _coupled_advance(m, X[None], Y[None], dW[None], dt, ccfg, g)
    return Xn[0], Yn[0], float(dlogR[0]), {"I_theta": float(dI[0]), "quad_var": float(dQ[0]),
                                            "capped": bool(capped[0])}


def refinement_level(m, dn, h, g, ccfg):
    """Number of dyadic halvings of a base step needed to resolve the extra drift."""
    max_level = max(0, int(math.floor(math.log2(ccfg.stepper.dt / ccfg.stepper.min_step) + 1e-9)))
    safe = np.where(dn > 0, dn, 1.0)
    ratio = h * g * safe ** (-ccfg.epsilon) / TARGET_GAP_FRACTION
    with np.errstate(divide="ignore"):
        lvl = np.ceil(np.log2(np.maximum(ratio, 1e-300)))
    lvl = np.clip(lvl, 0, max_level).astype(int)
    near = dn < 10 * ccfg.couple_tol
    lvl[near] = np.maximum(lvl[near], min(1, max_level))
    return lvl


@dataclass
class CouplingBatch:
    """Per-pair arrays from :func:`run_couplings`; ``tau`` is ``inf`` where not coupled."""

    tau: np.ndarray
    logR_T: np.ndarray
    I_theta: np.ndarray
    quad_var: np.ndarray
    cap_events: np.ndarray
    steps: np.ndarray
    X_T: np.ndarray
    Y_T: np.ndarray

    def outcome(self, k):
        return CouplingOutcome(tau=float(self.tau[k]), logR_T=float(self.logR_T[k]),
                               I_theta=float(self.I_theta[k]), quad_var=float(self.quad_var[k]),
                               X_T=self.X_T[k].copy(), Y_T=self.Y_T[k].copy(),
                               cap_events=int(self.cap_events[k]), steps=int(self.steps[k]))

    def __len__(self):
        return self.tau.size


def _run_block(m, x, y, ccfg, master_seed, ids, steps):
    M, n = len(ids), m.space.n_modes
    noise = BlockNoise(master_seed, ids, n)
    X = np.repeat(x[None], M, axis=0)
    Y = np.repeat(y[None], M, axis=0)
    gap0 = float(_hnorm(m, x - y))
    g = np.full(M, gap0**ccfg.alpha if gap0 > 0 else 0.0)
    logR, I, Q = np.zeros(M), np.zeros(M), np.zeros(M)
    caps, nsteps = np.zeros(M, dtype=np.int64), np.zeros(M, dtype=np.int64)
    tau = np.full(M, np.inf)
    live = np.full(M, gap0 > ccfg.couple_tol)
    if not live.all():
        tau[~live] = 0.0
        Y[~live] = X[~live]
    for k, h in enumerate(steps):
        t = k * ccfg.stepper.dt
        dB = math.sqrt(h) * noise.next()
        done = np.flatnonzero(~live)
        if done.size:
            X[done] = advance(m, X[done], dB[done], h, ccfg.stepper)
            Y[done] = X[done]
            nsteps[done] += 1
        rows = np.flatnonzero(live)
        if rows.size:
            dn = _hnorm(m, X[rows] - Y[rows])
            lvl = refinement_level(m, dn, h, g[rows], ccfg)
            _advance_pairs(m, X, Y, dB, h, t, ccfg, g, rows, lvl, master_seed, ids, k,
                           logR, I, Q, caps, nsteps, tau, live)
    return tau, logR, I, Q, caps, nsteps, X, Y


def _advance_pairs(m, X, Y, dB, h, t, ccfg, g, rows, lvl, master_seed, ids, k,
                   logR, I, Q, caps, nsteps, tau, live):
    """Advance uncoupled rows through one base step, refining rows with ``lvl > 0``."""
    top = int(lvl.max())
    subs = {}
    for i in np.flatnonzero(lvl):
        r = rows[i]
        subs[r] = brownian_bridge(dB[r], h, int(lvl[i]), bridge_stream(master_seed, ids[r], k))
    for tick in range(2**top):
        act = [(r, l) for r, l in zip(rows, lvl) if tick % (2 ** (top - l)) == 0]
        if not act:
            continue
        idx = np.array([r for r, _ in act])
        hs = np.array([h / 2**l for _, l in act])
        inc = np.stack([dB[r] if l == 0 else subs[r][tick >> (top - l)] for r, l in act])
        # rows sharing a sub-step length are stepped together
        for hh in np.unique(hs):
            sel = hs == hh
            r_sel = idx[sel]
            still = live[r_sel]
            rl, rd = r_sel[still], r_sel[~still]
            if rd.size:
                X[rd] = advance(m, X[rd], inc[sel][~still], hh, ccfg.stepper)
                Y[rd] = X[rd]
                nsteps[rd] += 1
            if rl.size:
                Xn, Yn, dl, di, dq, cp = _coupled_advance(m, X[rl], Y[rl], inc[sel][still], hh, ccfg, g[rl])
                X[rl], Y[rl] = Xn, Yn
                logR[rl] += dl
                I[rl] += di
                Q[rl] += dq
                caps[rl] += cp
                nsteps[rl] += 1
                met = _hnorm(m, Xn - Yn) <= ccfg.couple_tol
                if met.any():
                    hit = rl[met]
                    pos = np.searchsorted(rows, hit)
                    # end time of the sub-step just taken
                    tau[hit] = t + (tick // 2 ** (top - lvl[pos]) + 1) * hh
                    live[hit] = False
                    Y[hit] = X[hit]


def run_couplings(m: ModelSpec, x, y, ccfg: CouplingConfig, n_pairs, master_seed,
                  substream_offset=0, threads=1) -> CouplingBatch:
    """Run ``n_pairs`` independent coupled pairs from ``(x, y)``; pair ``k`` uses substream ``substream_offset + k``."""
    x = check_vector(x, m.space, "x")
    y = check_vector(y, m.space, "y")
    if x.ndim != 1 or y.ndim != 1:
        raise ParameterError("x and y must be single coefficient vectors")
    if n_pairs < 1:
        raise ParameterError(f"n_pairs must be >= 1, got {n_pairs}")
    ccfg = ccfg.resolve(m.r)
    steps = time_grid(ccfg.T, ccfg.stepper.dt)

    def block(lo, hi):
        ids = list(range(substream_offset + lo, substream_offset + hi))
        return _run_block(m, x, y, ccfg, master_seed, ids, steps)

    parts = map_blocks(block, n_pairs, threads)
    cat = [np.concatenate([p[i] for p in parts]) for i in range(8)]
    return CouplingBatch(*cat)


def run_coupling(m: ModelSpec, x, y, ccfg: CouplingConfig, substream, master_seed=0) -> CouplingOutcome:
    """One coupled run on substream ``substream``."""
    return run_couplings(m, x, y, ccfg, 1, master_seed, substream_offset=substream).outcome(0)
