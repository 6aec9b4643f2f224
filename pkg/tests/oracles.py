"""Independent reference computations shared by the test modules."""

import itertools

import numpy as np


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def scaled_error(g: np.ndarray, ref: np.ndarray) -> float:
    """Max component error relative to the reference gradient's largest component."""
    return float(np.max(np.abs(g - ref)) / max(np.max(np.abs(ref)), 1e-300))


def brute_force_w1(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> float:
    """Minimum transport cost over every vertex of the transportation polytope.

    Each vertex is a basic feasible solution: pick n + m - 1 variables, solve
    the marginal equations for them, keep non-negative solutions.
    """
    n, m = len(a), len(b)
    rows = np.kron(np.eye(n), np.ones((1, m)))
    cols = np.kron(np.ones((1, n)), np.eye(m))
    A = np.vstack([rows, cols])
    rhs = np.concatenate([a, b])
    best = np.inf
    for basis in itertools.combinations(range(n * m), n + m - 1):
        sub = A[:, basis]
        if np.linalg.matrix_rank(sub) < n + m - 1:
            continue
        x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.min(x) < -1e-12 or np.max(np.abs(sub @ x - rhs)) > 1e-9:
            continue
        best = min(best, float(cost.ravel()[list(basis)] @ x))
    return best


def point_mass(shape, cell) -> np.ndarray:
    hm = np.zeros(shape)
    hm[cell] = 1.0
    return hm


def dirichlet_map(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(shape[0] * shape[1])).reshape(shape)


def logits_of(p: np.ndarray) -> np.ndarray:
    """A logit field whose softmax is ``p`` (p > 0)."""
    return np.log(p)
