"""Time stepping for the n-mode Galerkin system ``dX = A(X) dt + B(X) dW``.

The default scheme is drift-implicit Euler-Maruyama: the noise is evaluated
at the left endpoint (Ito) and ``x' = x + dt A(x') + B(x) dW`` is solved by
damped Newton. Because ``-A`` is monotone in H^gamma, the symmetrized
Jacobian ``H_w (1 - dt c) + dt w S^T diag(Psi'(u)) S`` (with
``H_w = diag(lambda^-gamma)``) is positive definite for ``dt c < 1``.

All routines work on stacks of paths, shape (M, n). Every row is updated
only from its own data, so results are independent of how paths are
batched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .errors import NumericalDomainError, ParameterError, ShapeError, StepFailure
from .linalg import spd_solve, toeplitz_hankel_solve
from .models import ModelSpec
from .parallel import map_blocks
from .rng import BlockNoise
from .spectral import check_vector

SCHEMES = ("semi_implicit", "tamed_explicit")
MAX_HALVINGS = 30


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "semi_implicit"
    dt: float = 1e-3
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    dt_min: float | None = None
    linear_solver: str = "dense"

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ParameterError("; ".join(problems))

    def violations(self):
        out = []
        if self.scheme not in SCHEMES:
            out.append(f"stepper.scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.dt > 0:
            out.append(f"stepper.dt must be > 0, got {self.dt}")
        elif not self.dt > self.min_step > 0:
            out.append(f"stepper.dt_min must satisfy 0 < dt_min < dt, got {self.dt_min}")
        if not self.newton_tol > 0:
            out.append(f"stepper.newton_tol must be > 0, got {self.newton_tol}")
        if int(self.newton_max_iter) != self.newton_max_iter or self.newton_max_iter < 1:
            out.append(f"stepper.newton_max_iter must be a positive integer, got {self.newton_max_iter}")
        if self.linear_solver not in ("dense", "cg"):
            out.append(f"stepper.linear_solver must be 'dense' or 'cg', got {self.linear_solver!r}")
        return out

    @property
    def min_step(self):
        return self.dt / 1024 if self.dt_min is None else self.dt_min


@dataclass(frozen=True)
class NoiseIncrement:
    """Cylindrical Brownian increment in H^gamma-orthonormal coordinates, each entry N(0, dt)."""

    dW: np.ndarray


def time_grid(T, dt):
    """Step sizes covering [0, T]: full steps of ``dt``, the last one shortened to land on T."""
    if T < 0:
        raise ParameterError(f"horizon must be >= 0, got {T}")
    if T == 0:
        return np.zeros(0)
    ratio = T / dt
    n = round(ratio)
    if abs(ratio - n) > 1e-9 * max(1.0, ratio) or n == 0:
        n = math.ceil(ratio)
    steps = np.full(n, dt)
    steps[-1] = T - (n - 1) * dt
    return steps


# ---------------------------------------------------------------------------
# core batched kernels


def _residual(m, u, g, rhs, h):
    b = m.basis
    pu = models.psi(m, g)
    F = (1.0 - h * m.c) * u + h * b.lam_pow * (pu @ b.P) - rhs
    return F


def _jacobian(m, g, h):
    b = m.basis
    K = b.weighted_gram(h * models.psi_prime(m, g))
    diag = np.arange(b.n)
    K[:, diag, diag] += (1.0 - h * m.c) * b.h_weight
    return K


def _newton_direction(m, g, h, rhs_lin):
    b = m.basis
    if b.cos_table is not None:
        t = (h * models.psi_prime(m, g)) @ b.cos_table
        return toeplitz_hankel_solve(t, (1.0 - h * m.c) * b.h_weight, rhs_lin)
    return spd_solve(_jacobian(m, g, h), rhs_lin)


def _cg_solve(m, g, h, rhs, tol, maxiter=200):
    """Matrix-free conjugate gradients on the symmetrized Jacobian, row-wise."""
    b = m.basis
    dpsi = h * models.psi_prime(m, g) * b.weight
    lin = (1.0 - h * m.c) * b.h_weight

    def matvec(v):
        return lin * v + (dpsi * (v @ b.ST)) @ b.S

    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = (r * r).sum(axis=1)
    stop = (tol**2) * np.maximum((rhs * rhs).sum(axis=1), 1e-300)
    for _ in range(maxiter):
        live = rr > stop
        if not live.any():
            break
        Ap = matvec(p)
        pAp = (p * Ap).sum(axis=1)
        alpha = np.where(live, rr / np.where(pAp > 0, pAp, 1.0), 0.0)
        x += alpha[:, None] * p
        r -= alpha[:, None] * Ap
        rr_new = (r * r).sum(axis=1)
        beta = np.where(live, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
        p = r + beta[:, None] * p
        rr = rr_new
    return x


def _hnorm(m, v):
    return np.sqrt((v * v * m.basis.h_weight).sum(axis=-1))


def _newton(m: ModelSpec, rhs, h, cfg: StepperConfig):
    """Solve ``u (1 - h c) + h L^gamma Psi(u) = rhs`` row-wise.

    Returns ``(u, converged, iterations)``; rows that fail keep their last iterate.
    """
    b = m.basis
    M = rhs.shape[0]
    out = rhs.copy()
    converged = np.zeros(M, dtype=bool)
    iters = np.zeros(M, dtype=int)
    rows = np.arange(M)
    u = rhs.copy()
    g = u @ b.ST
    F = _residual(m, u, g, rhs, h)
    res = _hnorm(m, F)
    for it in range(int(cfg.newton_max_iter) + 1):
        done = res <= cfg.newton_tol
        if done.any():
            out[rows[done]] = u[done]
            converged[rows[done]] = True
            iters[rows[done]] = it
            keep = ~done
            rows, u, g, F, res, rhs = rows[keep], u[keep], g[keep], F[keep], res[keep], rhs[keep]
        if rows.size == 0 or it == cfg.newton_max_iter:
            break
        if not np.all(np.isfinite(F)):
            bad = np.argwhere(~np.isfinite(F))[0]
            raise NumericalDomainError("non-finite Newton residual", location=f"path {rows[bad[0]]}, mode {bad[1] + 1}")
        rhs_lin = -(F * b.h_weight)
        if cfg.linear_solver == "cg":
            delta = _cg_solve(m, g, h, rhs_lin, cfg.newton_tol / 10)
        else:
            delta = _newton_direction(m, g, h, rhs_lin)
        lam = np.ones(rows.size)
        t = u + delta
        gt = t @ b.ST
        Ft = _residual(m, t, gt, rhs, h)
        rt = _hnorm(m, Ft)
        worse = ~(rt < res)
        for _ in range(MAX_HALVINGS):
            if not worse.any():
                break
            lam[worse] *= 0.5
            t[worse] = u[worse] + lam[worse, None] * delta[worse]
            gt[worse] = t[worse] @ b.ST
            Ft[worse] = _residual(m, t[worse], gt[worse], rhs[worse], h)
            rt[worse] = _hnorm(m, Ft[worse])
            worse = worse & ~(rt < res)
        u, g, F, res = t, gt, Ft, rt
    if rows.size:
        out[rows] = u
    return out, converged, iters


def advance(m: ModelSpec, X, dB, h, cfg: StepperConfig, extra=None):
    """One step of length ``h`` for every row of ``X``.

    ``dB`` holds cylindrical increments in H^gamma-orthonormal coordinates,
    ``extra`` an optional explicit drift (L^2 coefficients) added as ``h * extra``.
    Rows whose Newton solve fails are retried as two half steps with the
    increment split evenly, down to ``cfg.min_step``.
    """
    sig = models._noise_diag(m, X)
    rhs = X + sig * m.basis.h_scale * dB
    if extra is not None:
        rhs = rhs + h * extra
    if cfg.scheme == "tamed_explicit":
        a = models._drift(m, X)
        an = _hnorm(m, a)
        out = rhs + (h / (1.0 + h * an))[:, None] * a
        if not np.all(np.isfinite(out)):
            raise NumericalDomainError("non-finite state after tamed step")
        return out
    out, ok, _ = _newton(m, rhs, h, cfg)
    if not ok.all():
        bad = ~ok
        if h / 2 < cfg.min_step:
            raise StepFailure(
                f"Newton failed for {int(bad.sum())} path(s) at step {h:g} (dt_min {cfg.min_step:g})",
                diagnostics={"rows": np.flatnonzero(bad).tolist(), "h": h},
            )
        ex = None if extra is None else extra[bad]
        half = advance(m, X[bad], 0.5 * dB[bad], 0.5 * h, cfg, ex)
        out[bad] = advance(m, half, 0.5 * dB[bad], 0.5 * h, cfg, ex)
    return out


# ---------------------------------------------------------------------------
# public single-path API


def step(m: ModelSpec, x, dt, dW, cfg: StepperConfig):
    """Advance one coefficient vector by ``dt`` with cylindrical increment ``dW``."""
    x = check_vector(x, m.space)
    dW = dW.dW if isinstance(dW, NoiseIncrement) else dW
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (m.space.n_modes,):
        raise ShapeError(f"dW must have length {m.space.n_modes}, got shape {dW.shape}")
    return advance(m, x[None], dW[None], dt, cfg)[0]


def step_residual(m: ModelSpec, x_new, x, dt, dW):
    """H^gamma norm of the implicit-step residual ``x' - dt A(x') - (x + B(x) dW)``."""
    rhs = x + models.noise_apply(m, x, models.cylindrical_to_coeffs(m, dW))
    F = x_new - dt * models.drift(m, x_new) - rhs
    return float(_hnorm(m, F))


def simulate_path(m: ModelSpec, x0, T, cfg: StepperConfig, substream_id, master_seed, save_stride=None):
    """Integrate one path to ``T``.

    Returns the terminal state, or ``(terminal, times, states)`` when
    ``save_stride`` is given (states saved every ``save_stride`` steps plus the last).
    """
    x0 = check_vector(x0, m.space, "x0")
    noise = BlockNoise(master_seed, [substream_id], m.space.n_modes)
    X = x0[None].copy()
    times, states = [0.0], [X[0].copy()]
    steps = time_grid(T, cfg.dt)
    for k, h in enumerate(steps):
        X = advance(m, X, np.sqrt(h) * noise.next(), h, cfg)
        if save_stride and ((k + 1) % save_stride == 0 or k == len(steps) - 1):
            times.append((k + 1) * cfg.dt if k < len(steps) - 1 else T)
            states.append(X[0].copy())
    if save_stride:
        return X[0], np.array(times), np.array(states)
    return X[0]


def simulate_ensemble(m: ModelSpec, starts, T, cfg: StepperConfig, n_paths, master_seed,
                      substream_offset=0, threads=1, track_sup=False):
    """Paths from several starts driven by common random numbers.

    Path ``k`` from every start uses substream ``substream_offset + k``.
    Returns terminal states of shape (n_starts, n_paths, n) and, with
    ``track_sup``, ``sup_t |X(t)|^2`` in H^gamma of shape (n_starts, n_paths).
    """
    starts = check_vector(np.atleast_2d(starts), m.space, "starts")
    S = starts.shape[0]
    steps = time_grid(T, cfg.dt)
    n = m.space.n_modes

    def run_block(lo, hi):
        M = hi - lo
        noise = BlockNoise(master_seed, range(substream_offset + lo, substream_offset + hi), n)
        X = np.repeat(starts, M, axis=0)
        sup = _hnorm(m, X) ** 2
        for h in steps:
            z = noise.next()
            X = advance(m, X, np.sqrt(h) * np.tile(z, (S, 1)), h, cfg)
            if track_sup:
                np.maximum(sup, _hnorm(m, X) ** 2, out=sup)
        return X.reshape(S, M, n), sup.reshape(S, M)

    parts = map_blocks(run_block, n_paths, threads)
    terminal = np.concatenate([p[0] for p in parts], axis=1)
    if track_sup:
        return terminal, np.concatenate([p[1] for p in parts], axis=1)
    return terminal


# ---------------------------------------------------------------------------
# convergence probe


@dataclass
class ConvergenceResult:
    dts: np.ndarray
    errors: np.ndarray
    std_errors: np.ndarray
    slope: float
    n_paths: int


def convergence_probe(m: ModelSpec, x0, T, dt_list, n_paths, cfg: StepperConfig, master_seed,
                      threads=1, substream_offset=0):
    """Strong errors ``E |X_dt(T) - X_ref(T)|_H`` against the finest step, shared noise.

    Coarse increments are sums of the fine ones. The slope is the least-squares
    fit of log error against log dt over all non-reference steps.
    """
    dts = np.asarray(dt_list, dtype=float)
    if n_paths < 100:
        raise ParameterError("convergence_probe needs at least 100 paths")
    if dts.size < 2 or np.any(np.diff(dts) >= 0):
        raise ParameterError("dt_list must be strictly descending with at least two entries")
    ref = dts[-1]
    ratios = np.rint(dts / ref).astype(int)
    n_fine = round(T / ref)
    if np.any(np.abs(dts / ref - ratios) > 1e-9) or abs(T / ref - n_fine) > 1e-9:
        raise ParameterError("every dt and T must be integer multiples of the finest dt")
    if np.any(n_fine % ratios):
        raise ParameterError("T must be an integer multiple of every dt")
    x0 = check_vector(x0, m.space, "x0")
    n = m.space.n_modes
    L = dts.size

    def run_block(lo, hi):
        M = hi - lo
        noise = BlockNoise(master_seed, range(substream_offset + lo, substream_offset + hi), n)
        X = [np.repeat(x0[None], M, axis=0) for _ in range(L)]
        acc = [np.zeros((M, n)) for _ in range(L)]
        sq = math.sqrt(ref)
        for k in range(n_fine):
            dB = sq * noise.next()
            for lvl in range(L):
                acc[lvl] += dB
                if (k + 1) % ratios[lvl] == 0:
                    X[lvl] = advance(m, X[lvl], acc[lvl], dts[lvl], cfg)
                    acc[lvl][:] = 0.0
        return np.stack([_hnorm(m, X[lvl] - X[-1]) for lvl in range(L)])

    err = np.concatenate(map_blocks(run_block, n_paths, threads), axis=1)
    mean = err.mean(axis=1)
    se = err.std(axis=1, ddof=1) / math.sqrt(n_paths)
    use = mean[:-1] > 0
    slope = float("nan")
    if use.sum() >= 2:
        slope = float(np.polyfit(np.log(dts[:-1][use]), np.log(mean[:-1][use]), 1)[0])
    return ConvergenceResult(dts=dts, errors=mean, std_errors=se, slope=slope, n_paths=n_paths)
