"""Exact W1 on small grids via the transportation LP."""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from wassmark.ot.common import check_normalized, check_same_shape
from wassmark.ot.cost import DENSE_CELL_LIMIT, GroundCost
from wassmark.ot.sinkhorn import TransportPlan


def transport_lp(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Optimal coupling of flat marginals ``a``, ``b`` under a dense ``cost``."""
    n, m = cost.shape
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    # the last column constraint follows from the others, so it is dropped;
    # presolve misreads problems with tiny masses as infeasible, so it is off
    res = linprog(
        cost.ravel(),
        A_eq=sparse.vstack([rows, cols]).tocsr()[:-1],
        b_eq=np.concatenate([a, b])[:-1],
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10, "presolve": False},
    )
    if res.status != 0:
        raise RuntimeError(f"transportation LP failed: {res.message}")
    return np.clip(res.x.reshape(n, m), 0.0, None)


def exact_w1(u, v) -> tuple[float, TransportPlan]:
    """True W1 between normalized heatmaps of at most 256 cells.

    For a metric cost, mass present in both maps can stay in place, so the
    LP only moves the surplus of ``u`` onto the surplus of ``v``.
    """
    u = check_normalized(u, "source")
    v = check_normalized(v, "target")
    check_same_shape(u, v)
    if u.size > DENSE_CELL_LIMIT:
        raise ValueError(f"exact_w1 is limited to {DENSE_CELL_LIMIT} cells, got {u.shape[0]}x{u.shape[1]} = {u.size}")
    cost = GroundCost(*u.shape).dense()
    a, b = u.ravel(), v.ravel()
    stay = np.minimum(a, b)
    plan = np.diag(stay)
    surplus, deficit = a - stay, b - stay
    src, dst = np.flatnonzero(surplus > 0), np.flatnonzero(deficit > 0)
    if len(src) and len(dst):
        # both sides carry the same moved mass up to rounding
        moved = 0.5 * (surplus.sum() + deficit.sum())
        s = surplus[src] * (moved / surplus.sum())
        d = deficit[dst] * (moved / deficit.sum())
        plan[np.ix_(src, dst)] += transport_lp(s, d, cost[np.ix_(src, dst)])
    return float(np.sum(plan * cost)), TransportPlan(plan, u, v)
