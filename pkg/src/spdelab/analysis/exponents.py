"""Theoretical Hölder exponents of the semigroup from the coupling estimates.

* ``lemma21``: ``(theta - r + 1) / (2 theta)``.
* ``lemma22``: ``min(2 theta / (3 theta + 4), 1/2)`` (fast-diffusion case).
* ``corollary31``: ``sup_eps [eps - inf_p max(a1, a2, a3)]`` over the
  admissible ``eps`` window and ``p in (0, 1)``, evaluated on a grid.
"""
from __future__ import annotations

import numpy as np

from ..errors import ParameterError

KINDS = ("lemma21", "lemma22", "corollary31")


def epsilon_range(source, r, theta):
    """Open interval of admissible ``epsilon`` for the given source.

    ``lemma21``: ``max(0, r-1) < theta (1-eps) < min(2r, r+1)``.
    ``corollary31``: ``r-1 < theta (1-eps) < min(2(r-1), r+1)``.
    Both are intersected with ``(0, 1)``.
    """
    if not theta > 0:
        raise ParameterError(f"theta must be > 0, got {theta}")
    if source == "lemma21":
        lo_s, hi_s = max(0.0, r - 1), min(2 * r, r + 1)
    elif source == "corollary31":
        lo_s, hi_s = r - 1, min(2 * (r - 1), r + 1)
    else:
        raise ParameterError(f"epsilon_range source must be 'lemma21' or 'corollary31', got {source!r}")
    lo = max(0.0, 1 - hi_s / theta)
    hi = min(1.0, 1 - lo_s / theta)
    if not lo < hi:
        raise ParameterError(f"empty epsilon window for r={r}, theta={theta} ({source})")
    return lo, hi


def corollary31_alphas(eps, p, r, theta):
    """The three exponents ``a1, a2, a3``; broadcasts over ``eps`` and ``p``."""
    eps = np.asarray(eps, dtype=float)
    p = np.asarray(p, dtype=float)
    s = theta * (1 - eps)
    g = 0.5 * (r + 1 - s)
    a1 = eps * (2 * (r - 1) - s) / (2 * (p * theta + 1) * (r - 1) - s)
    if theta == 2:
        a2 = np.zeros(np.broadcast(eps, p).shape)
    else:
        a2 = eps * (theta - 2) / (2 * (1 - p) * theta + theta - 2)
    a3 = (eps - 2 * (1 - g)) / (p * theta + 1)
    return a1, a2, a3


def corollary31_objective(eps, p, r, theta):
    a1, a2, a3 = corollary31_alphas(eps, p, r, theta)
    return eps - np.maximum(np.maximum(a1, a2), a3)


def _grid(lo, hi, step):
    # interior points of (lo, hi) on a uniform grid of spacing ~step
    k = max(1, int(np.ceil((hi - lo) / step)))
    return lo + (hi - lo) * np.arange(1, k) / k if k > 1 else np.array([0.5 * (lo + hi)])


def corollary31_grid(r, theta, resolution=1e-4, chunk=256):
    """Grid search; returns ``(value, eps_star, p_star)``."""
    lo, hi = epsilon_range("corollary31", r, theta)
    eps = _grid(lo, hi, resolution)
    p = _grid(0.0, 1.0, resolution)
    best, arg = -np.inf, (np.nan, np.nan)
    for i in range(0, eps.size, chunk):
        e = eps[i:i + chunk, None]
        worst = np.maximum.reduce(np.broadcast_arrays(*corollary31_alphas(e, p[None, :], r, theta)))
        j = worst.argmin(axis=1)
        vals = e[:, 0] - worst[np.arange(e.shape[0]), j]
        k = int(vals.argmax())
        if vals[k] > best:
            best, arg = float(vals[k]), (float(e[k, 0]), float(p[j[k]]))
    return best, arg[0], arg[1]


def beta_theory(kind, r=None, theta=None, resolution=1e-4):
    """Hölder exponent predicted by the named estimate."""
    if kind not in KINDS:
        raise ParameterError(f"kind must be one of {KINDS}, got {kind!r}")
    if theta is None or not theta > 0:
        raise ParameterError(f"theta must be > 0, got {theta}")
    if kind == "lemma22":
        return min(2 * theta / (3 * theta + 4), 0.5)
    if r is None:
        raise ParameterError(f"{kind} needs r")
    if kind == "lemma21":
        if not r >= 1 or not theta > r - 1:
            raise ParameterError(f"lemma21 needs r >= 1 and theta > r - 1, got r={r}, theta={theta}")
        return (theta - r + 1) / (2 * theta)
    if not r > 1:
        raise ParameterError(f"corollary31 needs r > 1, got r={r}")
    return corollary31_grid(r, theta, resolution)[0]
