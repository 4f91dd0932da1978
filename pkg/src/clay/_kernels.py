"""Hot batch kernels: Householder rotation, sphere log map, subspace projection.

Each kernel exists twice: a numba ``@njit`` build (fused row loop, no
temporaries) and a vectorized pure-numpy build. ``clay._backend`` picks
the active set from the CLAY_BACKEND env var. Inputs are float64 and
C-contiguous; callers validate domains (unit norms, antipodal points)
before dispatching, so the kernels themselves never raise.

Small-angle handling matches the scalar geometry ops: theta/sin(theta)
switches to the series 1 + theta^2/6 below 1e-4, and rows closer than
1e-8 to the reference map to exactly zero.
"""

from __future__ import annotations

import math
import time

import numpy as np

from ._backend import BACKEND, USING_NUMBA

_SERIES_THETA = 1e-4
_ZERO_THETA = 1e-8


# --- pure-numpy build --------------------------------------------------------

def _reflect_rows_np(X: np.ndarray, u: np.ndarray) -> np.ndarray:
    return X - 2.0 * np.outer(X @ u, u)


def _rotate_rows_np(X, u1, u2):
    Y = X
    if u1 is not None:
        Y = _reflect_rows_np(Y, u1)
    if u2 is not None:
        Y = _reflect_rows_np(Y, u2)
    return Y if Y is not X else X.copy()


def _log_scale_np(theta: np.ndarray) -> np.ndarray:
    scale = np.empty_like(theta)
    small = theta < _SERIES_THETA
    scale[small] = 1.0 + theta[small] * theta[small] / 6.0
    scale[~small] = theta[~small] / np.sin(theta[~small])
    scale[theta < _ZERO_THETA] = 0.0
    return scale


def _log_rows_np(X: np.ndarray, mu: np.ndarray) -> np.ndarray:
    dots = np.clip(X @ mu, -1.0, 1.0)
    scale = _log_scale_np(np.arccos(dots))
    return (X - np.outer(dots, mu)) * scale[:, None]


def _project_rows_np(T: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return (T @ basis) @ basis.T


def _modulate_rows_np(X, u1, u2, mu, basis):
    return _project_rows_np(_log_rows_np(_rotate_rows_np(X, u1, u2), mu), basis)


# --- numba build -------------------------------------------------------------

if USING_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _rotate_log_rows_nb(X, use_u1, u1, use_u2, u2, mu):
        n, d = X.shape
        T = np.empty((n, d))
        w = np.empty(d)
        for i in range(n):
            for j in range(d):
                w[j] = X[i, j]
            if use_u1:
                a = 0.0
                for j in range(d):
                    a += w[j] * u1[j]
                a *= 2.0
                for j in range(d):
                    w[j] -= a * u1[j]
            if use_u2:
                a = 0.0
                for j in range(d):
                    a += w[j] * u2[j]
                a *= 2.0
                for j in range(d):
                    w[j] -= a * u2[j]
            dot = 0.0
            for j in range(d):
                dot += w[j] * mu[j]
            if dot > 1.0:
                dot = 1.0
            elif dot < -1.0:
                dot = -1.0
            theta = math.acos(dot)
            if theta < _ZERO_THETA:
                scale = 0.0
            elif theta < _SERIES_THETA:
                scale = 1.0 + theta * theta / 6.0
            else:
                scale = theta / math.sin(theta)
            for j in range(d):
                T[i, j] = (w[j] - dot * mu[j]) * scale
        return T

    @njit(cache=True)
    def _project_rows_nb(T, basis):
        return np.dot(np.dot(T, basis), basis.T)

    def _rotate_rows_numba(X, u1, u2):
        # rotation only: reuse the fused kernel with a zero-scale bypass
        # is not possible, so keep the numpy path (two BLAS rank-1 updates).
        return _rotate_rows_np(X, u1, u2)

    def _log_rows_numba(X, mu):
        return _rotate_log_rows_nb(X, False, mu, False, mu, mu)

    def _modulate_rows_numba(X, u1, u2, mu, basis):
        use1, use2 = u1 is not None, u2 is not None
        T = _rotate_log_rows_nb(
            X, use1, u1 if use1 else mu, use2, u2 if use2 else mu, mu
        )
        return _project_rows_nb(T, basis)


# --- dispatch ----------------------------------------------------------------

if USING_NUMBA:
    rotate_rows = _rotate_rows_numba
    log_rows = _log_rows_numba
    modulate_rows = _modulate_rows_numba
else:
    rotate_rows = _rotate_rows_np
    log_rows = _log_rows_np
    modulate_rows = _modulate_rows_np

project_rows = _project_rows_np


def backend_name() -> str:
    return BACKEND


def compare_backends(n=2000, d=256, k=50, repeats=5, seed=0) -> dict:
    """Time the fused modulation kernel on both builds.

    Returns per-backend mean milliseconds for one pass over an n-by-d
    batch; the numba entry is absent when numba is not importable.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    mu = rng.standard_normal(d)
    mu /= np.linalg.norm(mu)
    u1 = rng.standard_normal(d)
    u1 /= np.linalg.norm(u1)
    u2 = rng.standard_normal(d)
    u2 /= np.linalg.norm(u2)
    basis = np.linalg.qr(rng.standard_normal((d, k)))[0]

    impls = {"numpy": _modulate_rows_np}
    if USING_NUMBA:
        impls["numba"] = _modulate_rows_numba

    report = {"n": n, "d": d, "k": k, "repeats": repeats, "timings_ms": {}}
    for name, fn in impls.items():
        fn(X, u1, u2, mu, basis)  # warm up (JIT compile, page-in)
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn(X, u1, u2, mu, basis)
            samples.append((time.perf_counter() - t0) * 1e3)
        report["timings_ms"][name] = {
            "median": float(np.median(samples)),
            "min": float(np.min(samples)),
        }
    return report
