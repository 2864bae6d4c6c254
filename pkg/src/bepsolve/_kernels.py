"""Hot grid kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``BEPSOLVE_NUMBA`` is not
``0``.  Both paths compute the same quantities; tests run them side by side.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None

USE_NUMBA = numba is not None and os.environ.get("BEPSOLVE_NUMBA", "1") != "0"

if numba is not None and "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is often too old; the portable layer is enough here
    numba.config.THREADING_LAYER = "workqueue"

# rows per block in the numpy path; bounds the temporary at CHUNK x N doubles
CHUNK = 512


def max_affine_numpy(Q, Y, c):
    """``out[i] = max_j (Q[i] . Y[j] + c[j])`` using blocked matmuls."""
    Q = np.ascontiguousarray(Q, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    out = np.empty(Q.shape[0])
    for start in range(0, Q.shape[0], CHUNK):
        block = Q[start:start + CHUNK] @ Y.T
        block += c
        out[start:start + CHUNK] = block.max(axis=1)
    return out


def argmax_affine_numpy(Q, Y, c):
    Q = np.ascontiguousarray(Q, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    out = np.empty(Q.shape[0], dtype=np.int64)
    for start in range(0, Q.shape[0], CHUNK):
        block = Q[start:start + CHUNK] @ Y.T
        block += c
        out[start:start + CHUNK] = block.argmax(axis=1)
    return out


def project_simplex_numpy(P, radius):
    """Row-wise Euclidean projection onto ``{x >= 0, sum(x) = radius}``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = P.shape[1]
    u = -np.sort(-P, axis=1)
    css = np.cumsum(u, axis=1) - radius
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(P.shape[0]), rho] / (rho + 1)
    return np.maximum(P - tau[:, None], 0.0)


if numba is not None:

    @numba.njit(cache=True, parallel=True)
    def _max_affine_nb(Q, Y, c):
        m, n = Q.shape
        N = Y.shape[0]
        out = np.empty(m)
        for i in numba.prange(m):
            best = -np.inf
            for j in range(N):
                v = c[j]
                for t in range(n):
                    v += Q[i, t] * Y[j, t]
                if v > best:
                    best = v
            out[i] = best
        return out

    @numba.njit(cache=True, parallel=True)
    def _argmax_affine_nb(Q, Y, c):
        m, n = Q.shape
        N = Y.shape[0]
        out = np.empty(m, dtype=np.int64)
        for i in numba.prange(m):
            best = -np.inf
            arg = 0
            for j in range(N):
                v = c[j]
                for t in range(n):
                    v += Q[i, t] * Y[j, t]
                if v > best:
                    best = v
                    arg = j
            out[i] = arg
        return out

    @numba.njit(cache=True)
    def _project_simplex_nb(P, radius):
        m, n = P.shape
        out = np.empty_like(P)
        for i in range(m):
            u = np.sort(P[i])[::-1]
            css = 0.0
            tau = 0.0
            for k in range(n):
                css += u[k]
                t = (css - radius) / (k + 1)
                if u[k] - t > 0:
                    tau = t
            for k in range(n):
                v = P[i, k] - tau
                out[i, k] = v if v > 0.0 else 0.0
        return out


def max_affine(Q, Y, c=None):
    Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=float)
    Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=float)
    c = np.zeros(Y.shape[0]) if c is None else np.ascontiguousarray(c, dtype=float)
    if USE_NUMBA:
        return _max_affine_nb(Q, Y, c)
    return max_affine_numpy(Q, Y, c)


def argmax_affine(Q, Y, c=None):
    Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=float)
    Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=float)
    c = np.zeros(Y.shape[0]) if c is None else np.ascontiguousarray(c, dtype=float)
    if USE_NUMBA:
        return _argmax_affine_nb(Q, Y, c)
    return argmax_affine_numpy(Q, Y, c)


# above this many rows the vectorized sort beats the per-row compiled loop
SIMPLEX_NUMBA_ROWS = 64


def project_simplex(P, radius):
    P = np.ascontiguousarray(np.atleast_2d(P), dtype=float)
    if USE_NUMBA and P.shape[0] <= SIMPLEX_NUMBA_ROWS:
        return _project_simplex_nb(P, float(radius))
    return project_simplex_numpy(P, radius)
