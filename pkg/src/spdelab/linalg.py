"""Batched dense solves for the small symmetric positive definite Newton systems."""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def _cholesky_solve(K, rhs, out):
    M, n, _ = K.shape
    L = np.empty((n, n))
    y = np.empty(n)
    ok = True
    for m in range(M):
        for j in range(n):
            s = K[m, j, j]
            for k in range(j):
                s -= L[j, k] * L[j, k]
            if not s > 0.0:
                ok = False
                break
            d = np.sqrt(s)
            L[j, j] = d
            for i in range(j + 1, n):
                t = K[m, i, j]
                for k in range(j):
                    t -= L[i, k] * L[j, k]
                L[i, j] = t / d
        if not ok:
            return False
        for i in range(n):
            t = rhs[m, i]
            for k in range(i):
                t -= L[i, k] * y[k]
            y[i] = t / L[i, i]
        for i in range(n - 1, -1, -1):
            t = y[i]
            for k in range(i + 1, n):
                t -= L[k, i] * out[m, k]
            out[m, i] = t / L[i, i]
    return True


def spd_solve(K, rhs):
    """Solve ``K[m] x[m] = rhs[m]`` for a stack of SPD matrices.

    Falls back to LU when a matrix is not numerically positive definite.
    """
    K = np.ascontiguousarray(K, dtype=float)
    rhs = np.ascontiguousarray(rhs, dtype=float)
    out = np.empty_like(rhs)
    if _cholesky_solve(K, rhs, out):
        return out
    return np.linalg.solve(K, rhs[..., None])[..., 0]


@numba.njit(cache=True, nogil=True, fastmath=True)
def _toeplitz_hankel_solve(t, diag, rhs, out):
    # assemble the lower triangle row by row and factor in place (Cholesky-Banachiewicz)
    M, n = rhs.shape
    L = np.empty((n, n))
    y = np.empty(n)
    for m in range(M):
        tm = t[m]
        for i in range(n):
            for j in range(i + 1):
                s = tm[i - j] - tm[i + j + 2]
                for k in range(j):
                    s -= L[i, k] * L[j, k]
                if j < i:
                    L[i, j] = s / L[j, j]
                else:
                    s += diag[i]
                    if not s > 0.0:
                        return False
                    L[i, i] = np.sqrt(s)
        for i in range(n):
            s = rhs[m, i]
            for k in range(i):
                s -= L[i, k] * y[k]
            y[i] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = y[i]
            for k in range(i + 1, n):
                s -= L[k, i] * out[m, k]
            out[m, i] = s / L[i, i]
    return True


def toeplitz_hankel_solve(t, diag, rhs):
    """Solve with ``K[m]_ij = t[m, |i-j|] - t[m, i+j+2] + diag_i delta_ij`` (0-based i, j).

    This is the d = 1 Newton matrix ``diag + w S^T diag(v) S`` written through
    the cosine transform ``t`` of ``v``.
    """
    t = np.ascontiguousarray(t, dtype=float)
    rhs = np.ascontiguousarray(rhs, dtype=float)
    diag = np.ascontiguousarray(diag, dtype=float)
    out = np.empty_like(rhs)
    if _toeplitz_hankel_solve(t, diag, rhs, out):
        return out
    n = rhs.shape[1]
    i = np.arange(n)
    K = t[:, np.abs(i[:, None] - i[None, :])] - t[:, i[:, None] + i[None, :] + 2]
    K[:, i, i] += diag
    return np.linalg.solve(K, rhs[..., None])[..., 0]
