"""Compiled inner loops for grid Sinkhorn.

The Gibbs kernel exp(-C/eps) of a Euclidean grid cost is block Toeplitz, so
``K @ v`` is evaluated from the (H, W, W) table ``T[dy, xi, xj]`` without ever
forming the (HW, HW) matrix. Small grids use plain loops; larger grids switch
to BLAS products, one per row offset.
"""

import numpy as np
from numba import njit

_LOOP_CELLS = 1024


@njit(cache=True, fastmath={"reassoc", "contract"})
def _apply_loops(T, V, out):
    H, W = V.shape
    for yi in range(H):
        for xi in range(W):
            out[yi, xi] = 0.0
    for yi in range(H):
        for yj in range(H):
            d = yi - yj
            if d < 0:
                d = -d
            for xi in range(W):
                s = 0.0
                for xj in range(W):
                    s += T[d, xi, xj] * V[yj, xj]
                out[yi, xi] += s


@njit(cache=True)
def _apply_blas(T, V, out):
    H, W = V.shape
    out[:, :] = np.dot(V, T[0])
    for d in range(1, H):
        out[d:, :] += np.dot(np.ascontiguousarray(V[: H - d]), T[d])
        out[: H - d, :] += np.dot(np.ascontiguousarray(V[d:]), T[d])


@njit(cache=True)
def apply_kernel(T, V, out):
    """out[i] = sum_j k(i - j) V[j] for a symmetric offset kernel."""
    H, W = V.shape
    if H * W <= _LOOP_CELLS:
        _apply_loops(T, V, out)
    else:
        _apply_blas(T, V, out)


@njit(cache=True)
def _finite_max(x):
    m = -np.inf
    for v in x.ravel():
        if v > m and v < np.inf:
            m = v
    return m


@njit(cache=True)
def log_kernel_sum(T, g, work, out):
    """out = log(K exp(g)) via one global shift of g.

    Every row of K holds an entry >= exp(-max_cost/eps), so the shifted sum
    stays representable while max_cost/eps is a few hundred; terms lost to
    underflow are negligible against that floor.
    """
    s = _finite_max(g)
    work[:, :] = np.exp(g - s)
    apply_kernel(T, work, out)
    out[:, :] = np.log(out) + s


@njit(cache=True)
def sinkhorn_loop(T, a, b, f, g, tol, max_iter):
    """Log-domain Sinkhorn on scaled potentials ``f = F/eps``, ``g = G/eps``.

    Only ``f`` is read as a starting point; both are updated in place. Each pass checks the L1 row-marginal
    error of the current iterate (columns are exact after a ``g`` update) and
    stops once it is at most ``tol``. Returns (updates performed, final error).
    """
    log_a = np.log(a)
    log_b = np.log(b)
    work = np.empty_like(a)
    lk = np.empty_like(a)
    it = 0
    err = np.inf
    # Start from a g half-step so column marginals are exact for any f.
    log_kernel_sum(T, f, work, lk)
    g[:, :] = log_b - lk
    while True:
        log_kernel_sum(T, g, work, lk)
        err = 0.0
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                err += abs(np.exp(f[i, j] + lk[i, j]) - a[i, j])
        if err <= tol or it >= max_iter or not np.isfinite(err):
            break
        f[:, :] = log_a - lk
        log_kernel_sum(T, f, work, lk)
        g[:, :] = log_b - lk
        it += 1
    return it, err
