"""Gradient-descent harness on per-landmark logit fields.

Fits one heatmap's logits to a fixed target under each loss with plain
fixed-step gradient descent, recording loss, gradient norm and both decodes
at every iteration. No CNN is involved, so every run is deterministic.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from wassmark.heatmap import Amplitude, TargetSpec, decode_get_bc, decode_get_max, make_gaussian_target
from wassmark.ot import SinkhornConfig, js_divergence_loss, l2_heatmap_loss, l2_softmax_loss, soft_argmax_loss
from wassmark.ot.common import as_grid, softmax_normalize
from wassmark.ot.sinkhorn import wasserstein_loss

GRAD_NORM_STOP = 1e-10


class LossKind(str, enum.Enum):
    WASSERSTEIN = "wasserstein"
    L2 = "l2"  # softmax(logits) vs normalized target
    L2_RAW = "l2-raw"  # raw logits vs peak-one target
    JS = "js"
    SOFT_ARGMAX = "soft-argmax"


# Calibrated once on the 64x64, sigma=3, 20 px offset-blob problem; see
# scripts/calibrate_fit.py.
DEFAULT_STEPS = {
    LossKind.WASSERSTEIN: 1000.0,
    LossKind.L2: 10.0,
    LossKind.L2_RAW: 0.25,
    LossKind.JS: 100.0,
    LossKind.SOFT_ARGMAX: 1000.0,
}

# Fits use the regularized objective: with the sharp transport cost, logit
# descent concentrates all mass in one cell and stalls there.
FIT_SINKHORN = SinkhornConfig(epsilon=0.01, max_iterations=5000, marginal_tolerance=1e-6, objective="entropic")


@dataclass
class FitProblem:
    target: np.ndarray
    loss: LossKind
    init: np.ndarray
    step: float | None = None
    iterations: int = 2000
    sinkhorn: SinkhornConfig = FIT_SINKHORN
    gt_point: tuple[float, float] | None = None  # soft-argmax only; default: target barycenter

    def __post_init__(self):
        self.loss = LossKind(self.loss)
        self.target = as_grid(self.target, "target")
        self.init = as_grid(self.init, "init")
        if self.target.shape != self.init.shape:
            raise ValueError(f"target {self.target.shape} and init {self.init.shape} differ in shape")
        if self.step is None:
            self.step = DEFAULT_STEPS[self.loss]
        if not self.step > 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iteration budget must be an integer >= 1, got {self.iterations}")
        if self.loss is LossKind.SOFT_ARGMAX and self.gt_point is None:
            p = decode_get_bc(self.target)
            self.gt_point = (p.x, p.y)


@dataclass
class FitTrace:
    losses: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    bc: list[tuple[float, float]] = field(default_factory=list)
    max: list[tuple[float, float]] = field(default_factory=list)
    final_logits: np.ndarray | None = None
    final_bc: tuple[float, float] | None = None
    final_max: tuple[float, float] | None = None
    diverged: bool = False
    stationary: bool = False  # stopped on the gradient-norm floor

    def __len__(self):
        return len(self.losses)

    def relative_decrease(self, n: int) -> float:
        """(loss[0] - loss[n]) / loss[0]."""
        return (self.losses[0] - self.losses[n]) / self.losses[0]

    def rows(self):
        for k, (loss, g, bc, mx) in enumerate(zip(self.losses, self.grad_norms, self.bc, self.max)):
            yield {"iteration": k, "loss": loss, "grad_norm": g, "bc_x": bc[0], "bc_y": bc[1], "max_x": mx[0], "max_y": mx[1]}


TRACE_COLUMNS = ("iteration", "loss", "grad_norm", "bc_x", "bc_y", "max_x", "max_y")


def write_trace_csv(trace: FitTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in trace.rows():
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


class _Objective:
    """Loss and logit-gradient for one problem, with Sinkhorn warm starts."""

    def __init__(self, problem: FitProblem):
        self.p = problem
        self._init = None
        self._adjoint = None

    def __call__(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        p = self.p
        if p.loss is LossKind.WASSERSTEIN:
            r = wasserstein_loss(z, p.target, p.sinkhorn, init=self._init, adjoint_init=self._adjoint)
            if all(np.isfinite(x).all() for x in r.potentials):
                self._init, self._adjoint = r.potentials, r.adjoint
            return r.value, r.gradient
        if p.loss is LossKind.L2:
            return l2_softmax_loss(z, p.target)
        if p.loss is LossKind.L2_RAW:
            return l2_heatmap_loss(z, p.target)
        if p.loss is LossKind.JS:
            return js_divergence_loss(z, p.target)
        return soft_argmax_loss(z, p.gt_point)


def _decodes(z: np.ndarray) -> tuple[tuple[float, float], tuple[float, float]]:
    bc = decode_get_bc(softmax_normalize(z))
    mx = decode_get_max(z)
    return (bc.x, bc.y), (mx.x, mx.y)


def fit(problem: FitProblem) -> FitTrace:
    """Plain fixed-step gradient descent on the logits; the target is fixed.

    Runs the whole budget unless the gradient norm drops below 1e-10. A
    non-finite loss or gradient truncates the trace and sets ``diverged``.
    """
    objective = _Objective(problem)
    trace = FitTrace()
    z = problem.init.copy()
    for _ in range(int(problem.iterations)):
        try:
            value, grad = objective(z)
        except ValueError:
            # an overflowing step makes the softmax input non-finite
            trace.diverged = True
            break
        if not (np.isfinite(value) and np.isfinite(grad).all()):
            trace.diverged = True
            break
        gnorm = float(np.linalg.norm(grad))
        bc, mx = _decodes(z)
        trace.losses.append(float(value))
        trace.grad_norms.append(gnorm)
        trace.bc.append(bc)
        trace.max.append(mx)
        if gnorm < GRAD_NORM_STOP:
            trace.stationary = True
            break
        z = z - problem.step * grad
    if np.isfinite(z).all():
        trace.final_logits = z
        trace.final_bc, trace.final_max = _decodes(z)
    return trace


# --- initial logit fields ---------------------------------------------------


def zero_init(shape) -> np.ndarray:
    return np.zeros(shape)


def random_init(shape, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    return np.random.default_rng(seed).normal(scale=scale, size=shape)


def offset_blob_init(target_center, distance: float, sigma: float, shape, *, floor: float = 0.5, direction=(-1.0, 0.0)):
    """Logits of a Gaussian blob ``distance`` px from the target centre, mixed
    with a uniform floor carrying ``floor`` of the mass.

    Without the floor, cells far from the blob start with mass around
    exp(-distance^2 / 2 sigma^2), and logit descent scales every update by the
    cell's mass, so the blob cannot move.
    """
    if not 0 <= floor < 1:
        raise ValueError(f"floor must be in [0, 1), got {floor}")
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    cx, cy = np.asarray(target_center, dtype=np.float64) + distance * d
    spec = TargetSpec(sigma, shape[0], shape[1], Amplitude.NORMALIZED)
    blob = make_gaussian_target((cx, cy), spec, warn=False)
    with np.errstate(divide="ignore"):
        return np.log((1 - floor) * blob + floor / blob.size)


def offset_blob_problem(
    loss: LossKind | str,
    *,
    size: int = 64,
    sigma: float = 3.0,
    distance: float = 20.0,
    floor: float = 0.5,
    step: float | None = None,
    iterations: int = 2000,
    sinkhorn: SinkhornConfig = FIT_SINKHORN,
) -> FitProblem:
    """The standard harness instance: target at the grid centre, blob to its left."""
    loss = LossKind(loss)
    c = (size // 2, size // 2)
    if loss is LossKind.L2_RAW:
        spec = TargetSpec(sigma, size, size, Amplitude.PEAK_ONE)
        target = make_gaussian_target(c, spec)
        init = make_gaussian_target((c[0] - distance, c[1]), spec, warn=False)
    else:
        target = make_gaussian_target(c, TargetSpec(sigma, size, size))
        init = offset_blob_init(c, distance, sigma, (size, size), floor=floor)
    return FitProblem(target, loss, init, step, iterations, sinkhorn, gt_point=c if loss is LossKind.SOFT_ARGMAX else None)


# --- spurious activation ----------------------------------------------------


@dataclass
class SpuriousRow:
    mass: float
    bc_displacement: float  # px, measured GET_BC error
    analytic_displacement: float  # px, m * distance for a two-blob mixture
    max_displacement: float  # px, GET_MAX error


@dataclass(frozen=True)
class SpuriousSetup:
    size: int = 64
    sigma: float = 3.0
    spurious_sigma: float = 1.5
    distance: float = 30.0
    center: tuple[float, float] = (16.0, 32.0)

    def blobs(self) -> tuple[np.ndarray, np.ndarray]:
        cx, cy = self.center
        true = make_gaussian_target((cx, cy), TargetSpec(self.sigma, self.size, self.size))
        spur = make_gaussian_target((cx + self.distance, cy), TargetSpec(self.spurious_sigma, self.size, self.size))
        return true, spur

    def dominance_mass(self) -> float:
        """Smallest spurious mass whose peak beats the true peak."""
        true, spur = self.blobs()
        return float(true.max() / (true.max() + spur.max()))


def spurious_activation_study(fractions, setup: SpuriousSetup = SpuriousSetup()) -> list[SpuriousRow]:
    """Decode (1 - m) * target + m * far blob with both decoders.

    The spurious blob is narrower than the target so its peak can dominate
    at m < 0.5.
    """
    true, spur = setup.blobs()
    center = np.asarray(setup.center, dtype=np.float64)
    rows = []
    for m in fractions:
        m = float(m)
        if not 0 <= m < 0.5:
            raise ValueError(f"spurious mass must be in [0, 0.5), got {m}")
        hm = (1 - m) * true + m * spur
        bc = decode_get_bc(hm).as_array()
        mx = decode_get_max(hm).as_array()
        rows.append(
            SpuriousRow(
                mass=m,
                bc_displacement=float(np.linalg.norm(bc - center)),
                analytic_displacement=m * setup.distance,
                max_displacement=float(np.linalg.norm(mx - center)),
            )
        )
    return rows
