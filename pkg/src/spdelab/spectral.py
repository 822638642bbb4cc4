"""Dirichlet-Laplacian eigenbasis on the unit box and the norms built on it.

States are stored as coefficients against the L^2-orthonormal eigenfunctions
``e_j`` of ``-Laplace`` with Dirichlet boundary conditions on ``(0, 1)^d``.
The state space ``H^gamma`` carries the norm ``sum_j lambda_j^{-gamma} c_j^2``,
so every linear operator used by the package is diagonal in these
coefficients, while nonlinearities are evaluated on an oversampled
interior grid through a discrete sine transform (DST-I).

For d = 1 the grid has ``N = oversample * n_modes`` interior points
``s_g = g / (N + 1)`` and the quadrature weight is ``1 / (N + 1)``; products
``e_j e_k`` with ``j + k < 2 (N + 1)`` are integrated exactly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParameterError, ShapeError, NumericalDomainError

NORM_KINDS = ("H_gamma", "B0_intrinsic", "L_rplus1", "V")


@dataclass(frozen=True)
class SpaceConfig:
    d: int = 1
    n_modes: int = 16
    gamma: float = 1.0
    oversample: int = 4

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ParameterError("; ".join(problems))

    def violations(self):
        out = []
        if int(self.d) != self.d or self.d < 1:
            out.append(f"space.d must be a positive integer, got {self.d}")
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            out.append(f"space.n_modes must be a positive integer, got {self.n_modes}")
        if not self.gamma > 0:
            out.append(f"space.gamma must be > 0, got {self.gamma}")
        if int(self.oversample) != self.oversample or self.oversample < 2:
            out.append(f"space.oversample must be an integer >= 2, got {self.oversample}")
        return out


class SpectralBasis:
    """Precomputed eigenvalues, synthesis matrix and quadrature for one space.

    Obtain instances through :func:`basis`, which caches them per config.
    """

    def __init__(self, cfg: SpaceConfig):
        self.cfg = cfg
        n, d = cfg.n_modes, cfg.d
        self.multi_index = _multi_indices(n, d)
        k2 = (self.multi_index.astype(float) ** 2).sum(axis=1)
        self.lam = np.pi**2 * k2
        self.lam_pow = self.lam ** cfg.gamma  # eigenvalues of (-Laplace)^gamma
        self.h_weight = self.lam ** (-cfg.gamma)  # H^gamma metric, diagonal
        self.h_scale = self.lam ** (cfg.gamma / 2)  # L2 coefficient of unit H-vector
        self.index = np.arange(1, n + 1, dtype=float)

        kmax = int(self.multi_index.max())
        self.axis_points = cfg.oversample * (kmax if d > 1 else n)
        npts = self.axis_points
        s1 = np.arange(1, npts + 1) / (npts + 1)
        self.grid_shape = (npts,) * d
        self.weight = float((npts + 1) ** (-d))

        # synthesis matrix: grid values = S @ coeffs
        sines = np.sqrt(2.0) * np.sin(np.pi * np.outer(s1, np.arange(1, kmax + 1)))
        if d == 1:
            S = sines[:, :n]
        else:
            S = np.ones((npts**d, n))
            for axis in range(d):
                idx = np.indices(self.grid_shape).reshape(d, -1)[axis]
                S *= sines[idx][:, self.multi_index[:, axis] - 1]
        self.S = np.ascontiguousarray(S)
        self.ST = np.ascontiguousarray(S.T)
        self.P = np.ascontiguousarray(S * self.weight)  # grid @ P -> coefficients

        if d == 1:
            # S^T diag(v) S w = T(|i-j|) - T(i+j) with T(k) = w sum_g v_g cos(k pi s_g)
            self.cos_table = np.cos(np.pi * np.outer(s1, np.arange(0, 2 * n + 1))) * self.weight
            i = np.arange(1, n + 1)
            self.toeplitz_idx = np.abs(i[:, None] - i[None, :])
            self.hankel_idx = i[:, None] + i[None, :]
        else:
            self.cos_table = None

    @property
    def n(self):
        return self.cfg.n_modes

    @property
    def grid_size(self):
        return self.S.shape[0]

    def weighted_gram(self, v):
        """Return ``w * S^T diag(v) S`` for each row of grid values ``v``.

        ``v`` has shape (M, G); the result has shape (M, n, n).
        """
        if self.cos_table is not None:
            t = v @ self.cos_table
            return t[:, self.toeplitz_idx] - t[:, self.hankel_idx]
        return np.matmul(self.ST[None] * (v * self.weight)[:, None, :], self.S)


def _multi_indices(n, d):
    if d == 1:
        return np.arange(1, n + 1).reshape(n, 1)
    kmax = n + 1
    cands = sorted(itertools.product(range(1, kmax + 1), repeat=d), key=lambda k: (sum(i * i for i in k), k))
    return np.array(cands[:n], dtype=int)


@lru_cache(maxsize=64)
def basis(cfg: SpaceConfig) -> SpectralBasis:
    return SpectralBasis(cfg)


def check_vector(x, cfg: SpaceConfig, name="x"):
    """Validate a coefficient vector (or a stack of them) and return it as float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim not in (1, 2) or arr.shape[-1] != cfg.n_modes:
        raise ShapeError(f"{name} must have trailing length {cfg.n_modes}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise NumericalDomainError(f"{name} contains non-finite entries", location=f"index {tuple(bad)}")
    return arr


def unit_vector(j, cfg: SpaceConfig):
    """Coefficients of ``e_j`` (1-based), the L^2-normalized eigenfunction."""
    if not 1 <= j <= cfg.n_modes:
        raise IndexError(f"mode index {j} outside 1..{cfg.n_modes}")
    e = np.zeros(cfg.n_modes)
    e[j - 1] = 1.0
    return e


def h_unit_vector(j, cfg: SpaceConfig):
    """Coefficients of the H^gamma-normalized vector along ``e_j``."""
    return unit_vector(j, cfg) * basis(cfg).h_scale[j - 1]


def pad(coeffs, cfg: SpaceConfig):
    """Zero-pad a short coefficient list to ``n_modes``."""
    c = np.asarray(coeffs, dtype=float).ravel()
    if c.size > cfg.n_modes:
        raise ShapeError(f"{c.size} coefficients given for {cfg.n_modes} modes")
    out = np.zeros(cfg.n_modes)
    out[: c.size] = c
    return out


def eigen_spectrum(cfg: SpaceConfig) -> np.ndarray:
    """Eigenvalues of ``-Laplace`` on the unit box, ascending, with multiplicity.

    Ties for d > 1 are broken by lexicographic order of the multi-index.
    """
    return basis(cfg).lam.copy()


def norm(x, kind, cfg: SpaceConfig, q=None, r=None):
    """Norm of a coefficient vector (or each row of a stack).

    ``H_gamma``: ``(sum lambda_j^-gamma c_j^2)^(1/2)``.
    ``B0_intrinsic``: ``|B0^{-1} x|`` in H^gamma with ``B0 e_j = j^-q e_j``.
    ``L_rplus1``: grid quadrature of ``(int |u|^(r+1))^(1/(r+1))``.
    ``V``: ``L_rplus1 + H_gamma``.
    """
    if kind not in NORM_KINDS:
        raise ParameterError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
    if kind == "B0_intrinsic" and (q is None or not q > 0.5):
        raise ParameterError("B0_intrinsic norm needs q > 1/2")
    if kind in ("L_rplus1", "V") and (r is None or not r > 0):
        raise ParameterError(f"{kind} norm needs r > 0")
    x = check_vector(x, cfg)
    b = basis(cfg)
    # scale rows by their largest entry so tiny or huge states neither underflow nor overflow
    scale = np.abs(x).max(axis=-1)
    safe = np.where(scale > 0, scale, 1.0)
    xs = x / (safe[..., None] if x.ndim == 2 else safe)
    if kind == "H_gamma":
        val = _h_norm(xs, b)
    elif kind == "B0_intrinsic":
        val = np.sqrt((xs * xs * b.h_weight * b.index ** (2 * q)).sum(axis=-1))
    elif kind == "L_rplus1":
        val = _lp_norm(xs, b, r + 1.0)
    else:
        val = _lp_norm(xs, b, r + 1.0) + _h_norm(xs, b)
    return val * scale


def _h_norm(x, b):
    return np.sqrt((x * x * b.h_weight).sum(axis=-1))


def _lp_norm(x, b, p):
    u = x @ b.ST
    return ((np.abs(u) ** p).sum(axis=-1) * b.weight) ** (1.0 / p)


def h_inner(x, y, cfg: SpaceConfig):
    """H^gamma inner product, row-wise for stacks."""
    return (np.asarray(x) * np.asarray(y) * basis(cfg).h_weight).sum(axis=-1)


def transform(x, direction, cfg: SpaceConfig):
    """Map coefficients to grid values (``to_grid``) or project back (``from_grid``).

    Grid values are returned flattened (C order) for d > 1.
    """
    b = basis(cfg)
    if direction == "to_grid":
        x = check_vector(x, cfg)
        return x @ b.ST
    if direction == "from_grid":
        v = np.asarray(x, dtype=float)
        if v.shape[-1] != b.grid_size:
            raise ShapeError(f"grid data must have trailing length {b.grid_size}, got {v.shape}")
        return v @ b.P
    raise ParameterError(f"direction must be 'to_grid' or 'from_grid', got {direction!r}")


def functional_mu(x, j, cfg: SpaceConfig):
    """Quadrature of ``int_D x(s) e_j(s) ds``.

    For band-limited ``x`` this equals the coefficient ``c_j``; the noise
    models rely on that identity (see tests/test_spectral.py).
    """
    if not 1 <= j <= cfg.n_modes:
        raise IndexError(f"mode index {j} outside 1..{cfg.n_modes}")
    b = basis(cfg)
    u = transform(x, "to_grid", cfg)
    return (u * b.S[:, j - 1]).sum(axis=-1) * b.weight
