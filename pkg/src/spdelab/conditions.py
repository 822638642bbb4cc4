"""Empirical certification of the structural inequalities on sampled states.

For a model ``m`` and exponent ``theta`` the monotonicity functional

    G(v1, v2) = 2 <A(v1) - A(v2), v1 - v2>_H + |B(v1) - B(v2)|_HS^2

is compared with ``-delta1 S(v1, v2) + K1 |v1 - v2|^2`` where

* porous medium: ``S = |w|_B0^theta |w|^(r+1-theta)``,
* fast diffusion: ``S = |w|_B0^theta / (|w|^(theta-2) max(h(v1), h(v2))^(1-r))``, ``h = |.|_V``,

and ``w = v1 - v2``. ``K1`` is the smallest constant that works with
``delta1 = 0`` and ``delta1`` the largest that then works, both with a 5%
safety margin. A report is evidence on samples, not a proof.

The coercivity, growth and noise-growth inequalities are fitted the same
way; their constants are reported in ``extra``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models
from .errors import ParameterError
from .models import ModelSpec
from .rng import substream
from .spectral import _h_norm, _lp_norm

SAFETY = 0.05


@dataclass(frozen=True)
class ConditionSampler:
    """Sampling law for states: ``c_j ~ scale * N(0, j^-2)``.

    A fraction ``near_fraction`` of pairs are close: ``v2 = v1 + delta * z`` with
    ``delta`` log-uniform on ``[near_min, 1]`` and ``z`` drawn like ``v1``.
    """

    scale: float = 1.0
    near_fraction: float = 0.5
    near_min: float = 1e-3

    def __post_init__(self):
        if not self.scale > 0:
            raise ParameterError(f"sampler scale must be > 0, got {self.scale}")
        if not 0 <= self.near_fraction <= 1:
            raise ParameterError(f"near_fraction must lie in [0, 1], got {self.near_fraction}")
        if not 0 < self.near_min <= 1:
            raise ParameterError(f"near_min must lie in (0, 1], got {self.near_min}")

    def draw(self, m: ModelSpec, n_pairs, gen):
        n = m.space.n_modes
        sd = self.scale / m.basis.index
        v1 = gen.standard_normal((n_pairs, n)) * sd
        far = gen.standard_normal((n_pairs, n)) * sd
        z = gen.standard_normal((n_pairs, n)) * sd
        delta = np.exp(gen.uniform(np.log(self.near_min), 0.0, n_pairs))
        near = gen.uniform(size=n_pairs) < self.near_fraction
        v2 = np.where(near[:, None], v1 + delta[:, None] * z, far)
        return v1, v2


@dataclass
class ConditionReport:
    n_pairs: int
    violations: int
    fitted_K1: float
    fitted_delta1: float
    theta: float
    worst_margin: float
    holdout_violations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def verdict(self):
        ok = self.violations == 0 and self.fitted_delta1 > 0 and self.extra.get("coercivity", {}).get("c2", 1) > 0
        return "PASS" if ok else "FAIL"


def theta_range_violations(m: ModelSpec, theta):
    """Admissible ``theta`` (and ``q`` for fast diffusion) for the monotonicity inequality."""
    r, q = m.r, m.noise.q
    if m.kind == "porous_medium":
        if not r - 1 < theta <= r + 1:
            return [f"porous_medium needs theta in ({r - 1:g}, {r + 1:g}], got {theta}"]
        return []
    lo, hi = 4 / (r + 1), (6 * r + 2) / (r + 1)
    out = []
    if not lo < theta < hi:
        out.append(f"fast_diffusion needs theta in ({lo:.6g}, {hi:.6g}), got {theta}")
    qmax = (3 * r + 1) / (theta * (r + 1))
    if not 0.5 < q < qmax:
        out.append(f"fast_diffusion needs q in (1/2, {qmax:.6g}) for theta={theta}, got q={q}")
    return out


def _h_inner(m, a, b):
    return (a * b * m.basis.h_weight).sum(axis=-1)


def _v_norm(m, v):
    b = m.basis
    return _lp_norm(v, b, m.r + 1) + _h_norm(v, b)


def monotonicity_terms(m: ModelSpec, v1, v2, theta):
    """``(G, |w|^2, S)`` row-wise for stacks of pairs."""
    b = m.basis
    w = v1 - v2
    G = 2 * _h_inner(m, models._drift(m, v1) - models._drift(m, v2), w)
    dsig = models._noise_diag(m, v1) - models._noise_diag(m, v2)
    G = G + (dsig * dsig).sum(axis=-1)
    wn = _h_norm(w, b)
    b0 = np.sqrt((w * w * b.h_weight * b.index ** (2 * m.noise.q)).sum(axis=-1))
    if m.kind == "porous_medium":
        S = b0**theta * wn ** (m.r + 1 - theta)
    else:
        hmax = np.maximum(_v_norm(m, v1), _v_norm(m, v2))
        with np.errstate(divide="ignore", invalid="ignore"):
            S = b0**theta / (wn ** (theta - 2) * hmax ** (1 - m.r))
        S = np.where(wn > 0, S, 0.0)
    return G, wn * wn, S


def _fit_monotonicity(G, w2, S):
    use = w2 > 0
    K1 = (1 + SAFETY) * max(0.0, float(np.max(G[use] / w2[use]))) if use.any() else 0.0
    pos = use & (S > 0)
    delta1 = (1 - SAFETY) * float(np.min((K1 * w2[pos] - G[pos]) / S[pos])) if pos.any() else 0.0
    return K1, max(delta1, 0.0)


def _count(G, w2, S, K1, delta1):
    use = w2 > 0
    rhs = -delta1 * S + K1 * w2
    margin = np.where(use, rhs - G, np.inf)
    # tolerance for rounding in G near zero
    tol = 1e-12 * (np.abs(G) + K1 * w2 + delta1 * S)
    return int(np.sum(margin[use] < -tol[use])), float(np.min(margin[use])) if use.any() else 0.0


def _coercivity(m, v):
    """Fit ``2<A(v),v> + |B(v)|^2 <= c1 - c2 |v|_V^(r+1) + c3 |v|^2``."""
    b = m.basis
    lhs = 2 * _h_inner(m, models._drift(m, v), v) + (models._noise_diag(m, v) ** 2).sum(axis=-1)
    vn = _v_norm(m, v)
    hn2 = _h_norm(v, b) ** 2
    lp = _lp_norm(v, b, m.r + 1) ** (m.r + 1)
    use = vn > 0
    c2 = 0.5 * float(np.min(2 * lp[use] / vn[use] ** (m.r + 1))) if use.any() else 0.0
    c3 = max(0.0, 2 * m.c)
    c1 = (1 + SAFETY) * max(0.0, float(np.max(lhs + c2 * vn ** (m.r + 1) - c3 * hn2)))
    bad = int(np.sum(lhs > c1 - c2 * vn ** (m.r + 1) + c3 * hn2 + 1e-12 * np.abs(lhs)))
    return {"c1": c1, "c2": c2, "c3_coe": c3, "violations": bad}


def _growth(m, u, v):
    """Fit ``|<A(u), v>| <= c4 + c5 (|u|_V^r + |v|_V^(r+1) + |u|^2 + |v|^2)`` with ``c4 = c5``."""
    b = m.basis
    lhs = np.abs(_h_inner(m, models._drift(m, u), v))
    rhs = 1 + _v_norm(m, u) ** m.r + _v_norm(m, v) ** (m.r + 1) + _h_norm(u, b) ** 2 + _h_norm(v, b) ** 2
    c5 = (1 + SAFETY) * float(np.max(lhs / rhs))
    return {"c4": c5, "c5": c5, "c3_growth": c5, "violations": int(np.sum(lhs > c5 * rhs))}


def _noise_growth(m, v):
    """Fit ``|B(v)|_HS^2 <= c~ (1 + |v|_V^(r+1) + |v|^2)``."""
    lhs = (models._noise_diag(m, v) ** 2).sum(axis=-1)
    rhs = 1 + _v_norm(m, v) ** (m.r + 1) + _h_norm(v, m.basis) ** 2
    ct = (1 + SAFETY) * float(np.max(lhs / rhs))
    return {"c_tilde": ct, "violations": int(np.sum(lhs > ct * rhs))}


def check_conditions(m: ModelSpec, theta, n_pairs, sampler: ConditionSampler | None = None,
                     master_seed=0, substream_id=0) -> ConditionReport:
    """Sample ``n_pairs`` state pairs and fit the structural constants.

    ``holdout_violations`` counts failures of the fitted inequality on an
    independent sample of the same size (informational).
    """
    if n_pairs < 1:
        raise ParameterError(f"n_pairs must be >= 1, got {n_pairs}")
    problems = theta_range_violations(m, theta)
    if problems:
        raise ParameterError("; ".join(problems))
    sampler = sampler or ConditionSampler()
    gen = substream(master_seed, substream_id)
    v1, v2 = sampler.draw(m, n_pairs, gen)
    h1, h2 = sampler.draw(m, n_pairs, gen)

    G, w2, S = monotonicity_terms(m, v1, v2, theta)
    K1, delta1 = _fit_monotonicity(G, w2, S)
    bad, worst = _count(G, w2, S, K1, delta1)
    hold, _ = _count(*monotonicity_terms(m, h1, h2, theta), K1, delta1)

    extra = {
        "coercivity": _coercivity(m, np.concatenate([v1, v2])),
        "growth": _growth(m, v1, v2),
        "noise_growth": _noise_growth(m, np.concatenate([v1, v2])),
        "sampler": {"scale": sampler.scale, "near_fraction": sampler.near_fraction, "near_min": sampler.near_min},
    }
    if m.kind == "fast_diffusion":
        co = dict(extra["coercivity"])
        co["reading"] = "c3|v|^2 (the printed c3|u|^2 has no u in scope)"
        extra["coercivity_h"] = co
    return ConditionReport(n_pairs=n_pairs, violations=bad, fitted_K1=K1, fitted_delta1=delta1,
                           theta=float(theta), worst_margin=worst, holdout_violations=hold, extra=extra)
