"""Drift and multiplicative-noise operators for porous-medium and fast-diffusion models.

The drift is ``A(u) = -(-Laplace)^gamma Psi(u) + c u`` with
``Psi(s) = s |s|^(r-1)``. The noise operator is diagonal in the eigenbasis,
``B(u) e_j = b_j(u) j^-q e_j``, acting on cylindrical Brownian motion of
``H^gamma``. Coefficient ``j`` of the cylindrical increment in the
L^2-eigenbasis is ``lambda_j^(gamma/2) dbeta_j`` with ``dbeta_j ~ N(0, dt)``
(see :func:`cylindrical_to_coeffs`).

All functions accept a single coefficient vector of length ``n_modes`` or a
stack of shape ``(M, n_modes)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, NumericalDomainError, ParameterError, ShapeError
from .spectral import SpaceConfig, basis, check_vector

MODEL_KINDS = ("porous_medium", "fast_diffusion")
NOISE_FAMILIES = ("constant", "weyl_example", "table")
DEGENERACY_FLOOR = 1e-300
# Psi'(u) = r |u|^(r-1) is unbounded at 0 when r < 1; the Newton Jacobian clips |u| here.
FAST_DIFFUSION_JACOBIAN_FLOOR = 1e-8


@dataclass(frozen=True)
class NoiseSpec:
    q: float = 0.6
    family: str = "constant"
    b: float = 1.0
    values: tuple = ()
    rho_floor: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        problems = self.violations()
        if problems:
            raise ParameterError("; ".join(problems))

    def violations(self, n_modes=None):
        out = []
        if not self.q > 0.5:
            out.append(f"noise.q must be > 1/2 so that B0 is Hilbert-Schmidt, got {self.q}")
        if self.family not in NOISE_FAMILIES:
            out.append(f"noise.family must be one of {NOISE_FAMILIES}, got {self.family!r}")
        if self.family == "constant" and not self.b > 0:
            out.append(f"noise.b must be > 0 for the constant family, got {self.b}")
        if self.family == "table":
            if not self.values or min(self.values) <= 0:
                out.append("noise.values must be a non-empty list of positive numbers")
            elif n_modes is not None and len(self.values) != n_modes:
                out.append(f"noise.values has {len(self.values)} entries for {n_modes} modes")
        if self.rho_floor is not None and not self.rho_floor > 0:
            out.append(f"noise.rho_floor must be > 0 when given, got {self.rho_floor}")
        return out


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "porous_medium"
    r: float = 2.0
    c: float = 0.0
    space: SpaceConfig = field(default_factory=SpaceConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    trunc_radius: float | None = None

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ParameterError("; ".join(problems))
        object.__setattr__(self, "_basis", basis(self.space))

    def violations(self):
        return model_violations(self.kind, self.r, self.c, self.space, self.noise, self.trunc_radius)

    @property
    def basis(self):
        return self._basis


def model_violations(kind, r, c, space, noise, trunc_radius=None):
    """Cross-field checks for a model; returns a list of messages."""
    out = []
    if kind not in MODEL_KINDS:
        return [f"model.kind must be one of {MODEL_KINDS}, got {kind!r}"]
    # r = 1 is admitted as the linear heat limit
    if kind == "porous_medium" and not r >= 1:
        out.append(f"porous_medium needs r >= 1, got r={r}")
    if kind == "fast_diffusion":
        if not 1 / 3 < r < 1:
            out.append(f"fast_diffusion needs 1/3 < r < 1, got r={r}")
        if space.d != 1 or space.gamma != 1:
            out.append("fast_diffusion is defined on D=(0,1) with gamma=1")
    if kind == "porous_medium" and space.gamma < space.d * noise.q:
        out.append(f"porous_medium needs gamma >= d*q, got gamma={space.gamma}, d*q={space.d * noise.q}")
    if not np.isfinite(c):
        out.append("model.c must be finite")
    if trunc_radius is not None and not trunc_radius > 0:
        out.append(f"model.trunc_radius must be > 0 when given, got {trunc_radius}")
    out.extend(noise.violations(space.n_modes))
    return out


def psi(m: ModelSpec, u):
    """Pointwise nonlinearity ``sign(u) |u|^r``."""
    if m.r == 1:
        return u
    a = np.abs(u)
    if m.r == 2:
        return u * a
    return np.sign(u) * a**m.r


def psi_prime(m: ModelSpec, u):
    a = np.abs(u)
    if m.r == 1:
        return np.ones_like(u)
    if m.r == 2:
        return 2.0 * a
    if m.r < 1:
        a = np.maximum(a, FAST_DIFFUSION_JACOBIAN_FLOOR)
    return m.r * a ** (m.r - 1)


def drift(m: ModelSpec, x):
    """``A(x) = -(-Laplace)^gamma Psi(x) + c x``, evaluated pseudo-spectrally."""
    x = check_vector(x, m.space)
    return _drift(m, x)


def _drift(m, x, grid=None):
    b = m.basis
    u = x @ b.ST if grid is None else grid
    pu = psi(m, u)
    if not np.all(np.isfinite(pu)):
        bad = np.argwhere(~np.isfinite(pu))[0]
        raise NumericalDomainError("non-finite nonlinearity on the grid", location=f"grid index {tuple(bad)}")
    out = -b.lam_pow * (pu @ b.P)
    if m.c:
        out = out + m.c * x
    return out


def _truncate(m, x):
    if m.trunc_radius is None:
        return x
    b = m.basis
    nrm = np.sqrt((x * x * b.h_weight).sum(axis=-1))
    scale = np.where(nrm > m.trunc_radius, m.trunc_radius / np.maximum(nrm, 1e-300), 1.0)
    return x * scale[..., None] if x.ndim == 2 else x * scale


def noise_diag(m: ModelSpec, x):
    """Diagonal entries ``sigma_j(x) = b_j(x) j^-q`` of ``B(x)``."""
    x = check_vector(x, m.space)
    return _noise_diag(m, x)


def _noise_diag(m, x):
    b = m.basis
    base = b.index ** (-m.noise.q)
    fam = m.noise.family
    if fam == "constant":
        return np.broadcast_to(m.noise.b * base, x.shape).copy()
    if fam == "table":
        return np.broadcast_to(np.asarray(m.noise.values) * base, x.shape).copy()
    # weyl_example: b_j = 1 / (1 + j^(-2 gamma / d) |mu(x e_j)|); mu(x e_j) equals c_j for band-limited x
    xt = _truncate(m, x)
    damp = b.index ** (-2.0 * m.space.gamma / m.space.d)
    return base / (1.0 + damp * np.abs(xt))


def cylindrical_to_coeffs(m: ModelSpec, dbeta):
    """L^2-eigenbasis coefficients of a cylindrical increment given in H^gamma-orthonormal coordinates."""
    return np.asarray(dbeta) * m.basis.h_scale


def noise_apply(m: ModelSpec, x, xi):
    """``B(x) xi`` for ``xi`` given in the eigenbasis (any normalization, B is diagonal)."""
    x = check_vector(x, m.space)
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != m.space.n_modes:
        raise ShapeError(f"xi must have trailing length {m.space.n_modes}, got {xi.shape}")
    return _noise_diag(m, x) * xi


def hs_norm(m: ModelSpec, x):
    """Hilbert-Schmidt norm of ``B(x)`` on H^gamma."""
    return np.sqrt((noise_diag(m, x) ** 2).sum(axis=-1))


def hs_norm_diff(m: ModelSpec, x, y):
    """Hilbert-Schmidt norm of ``B(x) - B(y)`` on H^gamma."""
    x = check_vector(x, m.space, "x")
    y = check_vector(y, m.space, "y")
    if x.shape != y.shape:
        raise ShapeError(f"x and y shapes differ: {x.shape} vs {y.shape}")
    d = _noise_diag(m, x) - _noise_diag(m, y)
    return np.sqrt((d * d).sum(axis=-1))


def tilde_b_inverse(m: ModelSpec, y, v):
    """Right inverse ``B*(y) (B(y) B*(y))^-1 v``, componentwise ``v_j / sigma_j(y)``."""
    y = check_vector(y, m.space, "y")
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != m.space.n_modes:
        raise ShapeError(f"v must have trailing length {m.space.n_modes}, got {v.shape}")
    return v / _checked_sigma(m, y)


def _checked_sigma(m, y):
    sig = _noise_diag(m, y)
    if np.any(sig < DEGENERACY_FLOOR):
        j = int(np.argwhere(sig < DEGENERACY_FLOOR)[0][-1]) + 1
        raise DegeneracyError(f"noise coefficient sigma_{j} below {DEGENERACY_FLOOR}; B(y) is not invertible")
    return sig


def rho_lower_bound(m: ModelSpec):
    """Lower bound of ``rho(v) = inf_j b_j(v)^2`` over all states (0 if none is known)."""
    fam = m.noise.family
    if fam == "constant":
        rho = m.noise.b**2
    elif fam == "table":
        rho = min(m.noise.values) ** 2
    elif m.trunc_radius is not None:
        b = m.basis
        # |c_j| <= R lambda_j^(gamma/2) on the truncation ball
        damp = b.index ** (-2.0 * m.space.gamma / m.space.d)
        rho = float(np.min(1.0 / (1.0 + damp * m.trunc_radius * b.h_scale)) ** 2)
    else:
        rho = 0.0
    if m.noise.rho_floor is not None and m.noise.rho_floor > rho:
        raise ParameterError(f"asserted rho_floor {m.noise.rho_floor} exceeds the provable bound {rho}")
    return rho
