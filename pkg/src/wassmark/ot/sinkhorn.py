"""Entropic Wasserstein-1 between heatmaps, with exact gradients.

Two objectives share one Sinkhorn solver:

``sharp`` (default)
    The transport cost <C, P_eps> of the entropic plan, without the entropy
    term. Its gradient w.r.t. the source distribution comes from
    differentiating the Sinkhorn fixed point (one symmetric linear solve).
``entropic``
    The regularized objective <C, P> + eps * sum P (log P - 1), minus its
    infimum over all sources so that it is non-negative. Its gradient is the
    centred dual potential of the source, so no linear solve is needed.

Either gradient is then pulled back through the softmax.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from wassmark.ot import _kernel
from wassmark.ot.common import as_grid, check_normalized, check_same_shape, softmax_backward, softmax_normalize
from wassmark.ot.cost import DENSE_CELL_LIMIT, GroundCost

# Above this max_cost / eps the shifted kernel product could underflow.
MAX_COST_OVER_EPS = 600.0
OBJECTIVES = ("sharp", "entropic")


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SinkhornConfig:
    """Sinkhorn settings. ``epsilon`` is in normalized-cost units."""

    epsilon: float = 0.01
    max_iterations: int = 1000
    marginal_tolerance: float = 1e-6
    log_domain: bool = True
    objective: str = "sharp"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.marginal_tolerance > 0:
            raise ValueError(f"marginal_tolerance must be > 0, got {self.marginal_tolerance}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be an integer >= 1, got {self.max_iterations}")
        if not self.log_domain:
            raise ValueError("only log-domain iterations are supported")


@dataclass
class TransportPlan:
    coupling: np.ndarray  # (HW, HW), row-major cells
    source: np.ndarray
    target: np.ndarray

    def marginal_errors(self) -> tuple[float, float]:
        rows = np.abs(self.coupling.sum(1) - self.source.ravel()).sum()
        cols = np.abs(self.coupling.sum(0) - self.target.ravel()).sum()
        return float(rows), float(cols)


@dataclass
class LossResult:
    value: float
    gradient: np.ndarray  # d value / d logits
    iterations_used: int
    converged: bool
    marginal_error: float = float("nan")
    # Schroedinger potentials (F, G), zero-mean F; also usable as warm start.
    potentials: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    adjoint: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class _Tables:
    cost: GroundCost
    epsilon: float
    kernel: np.ndarray  # Toeplitz of exp(-c/eps)
    cost_kernel: np.ndarray  # Toeplitz of c * exp(-c/eps)
    log_kernel_mass: np.ndarray  # log sum_i K_ij, per cell j


@lru_cache(maxsize=32)
def _tables(height: int, width: int, epsilon: float) -> _Tables:
    cost = GroundCost(height, width)
    if cost.max_cost / epsilon > MAX_COST_OVER_EPS:
        raise ValueError(
            f"epsilon={epsilon} too small for a {height}x{width} grid: need "
            f"epsilon >= {cost.max_cost / MAX_COST_OVER_EPS:.3g} (max_cost/epsilon <= {MAX_COST_OVER_EPS:g})"
        )
    c = cost.offset_table
    k = np.exp(-c / epsilon)
    kernel = cost.toeplitz(k)
    mass = np.empty((height, width))
    _kernel.apply_kernel(kernel, np.ones((height, width)), mass)
    return _Tables(cost, epsilon, kernel, cost.toeplitz(c * k), np.log(mass))


class EntropicSolution:
    """Converged (or partial) Sinkhorn state for one pair of grids.

    ``f`` and ``g`` are potentials divided by epsilon, in the convention
    ``P_ij = exp(f_i + g_j) K_ij``.
    """

    def __init__(self, a, b, cfg: SinkhornConfig, f, g, iterations, error):
        self.a, self.b, self.cfg = a, b, cfg
        self.f, self.g = f, g
        self.iterations = int(iterations)
        self.error = float(error)
        self.converged = bool(error <= cfg.marginal_tolerance)
        self.tables = _tables(a.shape[0], a.shape[1], cfg.epsilon)

    def _apply(self, table, x):
        out = np.empty_like(x)
        _kernel.apply_kernel(table, np.ascontiguousarray(x), out)
        return out

    def scalings(self) -> tuple[np.ndarray, np.ndarray]:
        """(alpha, v) with P_ij = alpha_i K_ij v_j and max(v) = 1."""
        s = self.g[np.isfinite(self.g)].max()
        with np.errstate(under="ignore"):
            return np.exp(self.f + s), np.exp(self.g - s)

    @property
    def value(self) -> float:
        alpha, v = self.scalings()
        return float(np.sum(alpha * self._apply(self.tables.cost_kernel, v)))

    @property
    def entropic_value(self) -> float:
        """Dual objective minus its infimum over sources, in cost units.

        The infimum drops the source constraint, which gives the plan
        b_j K_ij / sum_i K_ij and the value eps * sum_j b_j (log b_j - log k_j) - eps.
        """
        a, b = self.a, self.b
        alpha, v = self.scalings()
        total = float(np.sum(alpha * self._apply(self.tables.kernel, v)))
        pa, pb = a > 0, b > 0
        dual = np.sum(a[pa] * self.f[pa]) + np.sum(b[pb] * self.g[pb]) - total
        floor = np.sum(b[pb] * (np.log(b[pb]) - self.tables.log_kernel_mass[pb])) - 1.0
        return float(self.cfg.epsilon * (dual - floor))

    def dual_gradient(self) -> np.ndarray:
        """d entropic_value / d source-mass: eps * f, zero where a = 0."""
        return np.where(self.a > 0, self.cfg.epsilon * self.f, 0.0)

    def plan(self) -> TransportPlan:
        cost = self.tables.cost
        if cost.size > DENSE_CELL_LIMIT:
            raise ValueError(f"plan materialization limited to {DENSE_CELL_LIMIT} cells, grid has {cost.size}")
        alpha, v = self.scalings()
        k = np.exp(-cost.dense() / self.cfg.epsilon)
        return TransportPlan(alpha.ravel()[:, None] * k * v.ravel()[None, :], self.a, self.b)

    def _log_kernel_sum(self, h):
        out = np.empty_like(h)
        _kernel.log_kernel_sum(self.tables.kernel, np.ascontiguousarray(h), np.empty_like(h), out)
        return out

    def potentials(self) -> tuple[np.ndarray, np.ndarray]:
        """Schroedinger potentials (F, G) in cost units, F centred to zero mean.

        Defined as c-transforms, ``F_i = -eps log sum_j K_ij exp(g_j)``, so they
        are finite on zero-mass cells too, and F = eps (f - log a) at the fixed
        point.
        """
        eps = self.cfg.epsilon
        F = -eps * self._log_kernel_sum(self.g)
        G = -eps * self._log_kernel_sum(self.f)
        m = F.mean()
        return F - m, G + m

    def source_gradient(self, x0=None, rtol: float = 1e-12, maxiter: int | None = None):
        """d value / d source-mass, gauge fixed by <rowsum, grad> = 0.

        Solves (diag(r) - P diag(1/c) P^T) x = r_C - P (c_C / c), with r, c the
        plan's marginals and r_C, c_C the marginals of C * P, by Jacobi-
        preconditioned CG. Returns (gradient, cg_iterations).
        """
        K, KC = self.tables.kernel, self.tables.cost_kernel
        alpha, v = self.scalings()
        r = alpha * self._apply(K, v)
        cm = v * self._apply(K, alpha)
        r_c = alpha * self._apply(KC, v)
        c_c = v * self._apply(KC, alpha)
        inv_cm = np.divide(1.0, cm, out=np.zeros_like(cm), where=cm > 0)
        inv_r = np.divide(1.0, r, out=np.zeros_like(r), where=r > 0)

        def P(x):
            return alpha * self._apply(K, v * x)

        def PT(y):
            return v * self._apply(K, alpha * y)

        def A(x):
            return r * x - P(PT(x) * inv_cm) + r * np.sum(r * x)

        rhs = r_c - P(c_c * inv_cm)
        x = np.zeros_like(r) if x0 is None else np.where(r > 0, x0, 0.0)
        res = rhs - A(x)
        z = inv_r * res
        p = z.copy()
        rz = np.sum(res * z)
        stop = rtol**2 * max(np.sum(rhs * inv_r * rhs), 1e-300)
        maxiter = maxiter or max(200, 20 * r.size)
        it = 0
        while rz > stop and it < maxiter:
            q = A(p)
            step = rz / np.sum(p * q)
            x += step * p
            res -= step * q
            z = inv_r * res
            rz_new = np.sum(res * z)
            p = z + (rz_new / rz) * p
            rz = rz_new
            it += 1
        return x, it


def solve_entropic(a, b, cfg: SinkhornConfig = SinkhornConfig(), init=None) -> EntropicSolution:
    """Run log-domain Sinkhorn between two normalized grids.

    ``init`` is an optional (F, G) pair of potentials in cost units, e.g. the
    ``potentials`` of an earlier result, used as a warm start.
    """
    a = check_normalized(a, "source")
    b = check_normalized(b, "target")
    check_same_shape(a, b)
    t = _tables(a.shape[0], a.shape[1], cfg.epsilon)
    inv_eps = 1.0 / cfg.epsilon
    with np.errstate(divide="ignore"):
        la, lb = np.log(a), np.log(b)
    if init is None:
        f = np.where(a > 0, 0.0, -np.inf)
        g = np.where(b > 0, 0.0, -np.inf)
    else:
        F, G = (np.asarray(x, dtype=np.float64) for x in init)
        check_same_shape(a, F)
        check_same_shape(b, G)
        f = F * inv_eps + la
        g = G * inv_eps + lb
    f = np.ascontiguousarray(f)
    g = np.ascontiguousarray(g)
    it, err = _kernel.sinkhorn_loop(t.kernel, a, b, f, g, cfg.marginal_tolerance, int(cfg.max_iterations))
    return EntropicSolution(a, b, cfg, f, g, it, err)


def _result(sol: EntropicSolution, with_gradient: bool, adjoint_init=None) -> LossResult:
    grad = np.zeros_like(sol.a)
    lam = None
    sharp = sol.cfg.objective == "sharp"
    if with_gradient:
        if sharp:
            lam, _ = sol.source_gradient(x0=adjoint_init)
        else:
            lam = sol.dual_gradient()
        grad = softmax_backward(sol.a, lam)
    return LossResult(
        value=max(sol.value if sharp else sol.entropic_value, 0.0),
        gradient=grad,
        iterations_used=sol.iterations,
        converged=sol.converged,
        marginal_error=sol.error,
        potentials=sol.potentials(),
        adjoint=lam,
    )


def sinkhorn_w1(u, v, cfg: SinkhornConfig = SinkhornConfig(), *, init=None, gradient: bool = True) -> LossResult:
    """Entropic W1 between normalized heatmaps ``u`` (prediction) and ``v``.

    ``gradient`` is w.r.t. the logits that produced ``u`` through a softmax.
    A run that hits ``max_iterations`` is still returned, with
    ``converged=False``.
    """
    sol = solve_entropic(u, v, cfg, init=init)
    return _result(sol, gradient)


def wasserstein_loss(logits, target, cfg: SinkhornConfig = SinkhornConfig(), *, init=None, adjoint_init=None) -> LossResult:
    """Softmax the logits, then :func:`sinkhorn_w1` against ``target``."""
    p = softmax_normalize(logits)
    sol = solve_entropic(p, target, cfg, init=init)
    return _result(sol, True, adjoint_init=adjoint_init)


def sinkhorn_gradient(logits_u, v, cfg: SinkhornConfig = SinkhornConfig()) -> np.ndarray:
    res = wasserstein_loss(as_grid(logits_u, "logits"), v, cfg)
    if not res.converged:
        warnings.warn(
            f"Sinkhorn stopped after {res.iterations_used} iterations with marginal error "
            f"{res.marginal_error:.3g} > {cfg.marginal_tolerance:.3g}; gradient is approximate",
            ConvergenceWarning,
            stacklevel=2,
        )
    return res.gradient
