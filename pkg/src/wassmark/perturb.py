"""Seeded synthetic perturbations: elliptical occlusion and motion blur.

Images are float arrays in [0, 1], shaped (H, W) or (H, W, C). Every
protocol number here is configuration; "large" dominates "medium".
Randomness for item ``index`` comes from ``default_rng([seed, index])`` so
serial and parallel runs agree.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage


class PerturbKind(str, enum.Enum):
    OCCLUSION = "occlusion"
    MOTION_BLUR = "motion-blur"


class Protocol(str, enum.Enum):
    LARGE = "large"
    MEDIUM = "medium"


# (semi-axis fraction range of min(H, W), blur multiplier, blur cap in px)
PROTOCOLS = {
    Protocol.LARGE: ((0.15, 0.30), 1.0, 31),
    Protocol.MEDIUM: ((0.08, 0.15), 0.5, 15),
}


@dataclass(frozen=True)
class PerturbSpec:
    kind: PerturbKind = PerturbKind.OCCLUSION
    protocol: Protocol = Protocol.MEDIUM
    seed: int = 0
    semi_axis_range: tuple[float, float] | None = None
    blur_multiplier: float | None = None
    blur_cap: int | None = None
    nose_index: int = 33  # 0-based nose tip of the 68-point scheme

    def __post_init__(self):
        object.__setattr__(self, "kind", PerturbKind(self.kind))
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        axes, mult, cap = PROTOCOLS[self.protocol]
        if self.semi_axis_range is None:
            object.__setattr__(self, "semi_axis_range", axes)
        if self.blur_multiplier is None:
            object.__setattr__(self, "blur_multiplier", mult)
        if self.blur_cap is None:
            object.__setattr__(self, "blur_cap", cap)
        lo, hi = (float(v) for v in self.semi_axis_range)
        # (0, 0) is allowed as an explicit empty-occluder override
        if not (0 <= lo <= hi <= 0.5) or (lo == 0 and hi != 0):
            raise ValueError(f"semi-axis fractions must satisfy 0 < lo <= hi <= 0.5, got ({lo}, {hi})")
        object.__setattr__(self, "semi_axis_range", (lo, hi))
        if not self.blur_multiplier > 0:
            raise ValueError(f"blur multiplier must be > 0, got {self.blur_multiplier}")
        if int(self.blur_cap) != self.blur_cap or self.blur_cap < 1:
            raise ValueError(f"blur cap must be a positive integer, got {self.blur_cap}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def rng(self, index: int = 0) -> np.random.Generator:
        return np.random.default_rng([int(self.seed), int(index)])


def check_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim not in (2, 3) or min(arr.shape[:2]) < 1 or (arr.ndim == 3 and arr.shape[2] not in (1, 3)):
        raise ValueError(f"image must be (H, W), (H, W, 1) or (H, W, 3), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image has non-finite values")
    return arr


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float  # semi-axis along the rotated x axis, px
    b: float
    angle: float  # radians, counter-clockwise from +x toward +y (rows)

    @property
    def area(self) -> float:
        return math.pi * self.a * self.b

    def mask(self, shape) -> np.ndarray:
        """Cells whose centre lies inside the ellipse."""
        h, w = shape
        if self.a <= 0 or self.b <= 0:
            return np.zeros((h, w), dtype=bool)
        ys, xs = np.mgrid[0:h, 0:w]
        dx, dy = xs - self.cx, ys - self.cy
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = (c * dx + s * dy) / self.a
        v = (-s * dx + c * dy) / self.b
        return u * u + v * v <= 1.0

    def inside(self, shape) -> bool:
        """True when the ellipse is not clipped by the image border."""
        h, w = shape
        c, s = math.cos(self.angle), math.sin(self.angle)
        ex = math.hypot(self.a * c, self.b * s)
        ey = math.hypot(self.a * s, self.b * c)
        return self.cx - ex >= -0.5 and self.cx + ex <= w - 0.5 and self.cy - ey >= -0.5 and self.cy + ey <= h - 0.5

    def clipped_area(self, shape, oversample: int = 16) -> float:
        """Area of the ellipse inside the image rectangle, by supersampling."""
        h, w = shape
        if self.a <= 0 or self.b <= 0:
            return 0.0
        fine = Ellipse(
            (self.cx + 0.5) * oversample - 0.5,
            (self.cy + 0.5) * oversample - 0.5,
            self.a * oversample,
            self.b * oversample,
            self.angle,
        )
        return float(fine.mask((h * oversample, w * oversample)).sum()) / oversample**2

    def to_dict(self) -> dict:
        return asdict(self)


def draw_ellipse(shape, spec: PerturbSpec, index: int = 0) -> Ellipse:
    h, w = shape
    rng = spec.rng(index)
    lo, hi = spec.semi_axis_range
    side = min(h, w)
    a, b = rng.uniform(lo, hi, size=2) * side
    cx = rng.uniform(-0.5, w - 0.5)
    cy = rng.uniform(-0.5, h - 0.5)
    angle = rng.uniform(0.0, math.pi)
    return Ellipse(float(cx), float(cy), float(a), float(b), float(angle))


def occlude(img, spec: PerturbSpec, index: int = 0) -> tuple[np.ndarray, Ellipse]:
    """Black out one random rotated ellipse. Returns (image, ellipse)."""
    if spec.kind is not PerturbKind.OCCLUSION:
        raise ValueError(f"occlude needs an occlusion spec, got {spec.kind.value}")
    arr = check_image(img)
    ell = draw_ellipse(arr.shape[:2], spec, index)
    out = np.clip(arr, 0.0, 1.0)
    out[ell.mask(arr.shape[:2])] = 0.0
    return out, ell


@dataclass(frozen=True)
class BlurKernel:
    length: int
    angle: float  # radians, atan2(dy, dx) in image axes
    dx: float
    dy: float

    def to_dict(self) -> dict:
        return asdict(self)


def line_kernel(length: int, angle: float) -> np.ndarray:
    """Normalized box filter along ``angle``: ``length`` unit-spaced samples,
    bilinearly splatted. Point-symmetric, so convolution and correlation agree."""
    if length <= 1:
        return np.ones((1, 1))
    r = int(math.ceil((length - 1) / 2)) + 1
    k = np.zeros((2 * r + 1, 2 * r + 1))
    c, s = math.cos(angle), math.sin(angle)
    for t in np.arange(length) - (length - 1) / 2:
        x, y = r + t * c, r + t * s
        # snap values within rounding noise of an integer so axis-aligned
        # kernels hit cells exactly
        x, y = (round(v) if abs(v - round(v)) < 1e-9 else v for v in (x, y))
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        for yy, wy in ((y0, 1 - fy), (y0 + 1, fy)):
            for xx, wx in ((x0, 1 - fx), (x0 + 1, fx)):
                if wx * wy:
                    k[yy, xx] += wx * wy / length
    return k


def blur_directions(track) -> np.ndarray:
    """Per-frame displacement: central difference, one-sided at the ends."""
    pts = np.asarray(track, dtype=np.float64)
    d = np.empty_like(pts)
    d[1:-1] = pts[2:] - pts[:-2]
    d[0] = pts[1] - pts[0]
    d[-1] = pts[-1] - pts[-2]
    return d


def blur_kernel_for(direction, spec: PerturbSpec) -> BlurKernel:
    dx, dy = (float(v) for v in direction)
    length = min(int(round(spec.blur_multiplier * math.hypot(dx, dy))), int(spec.blur_cap))
    return BlurKernel(length, math.atan2(dy, dx), dx, dy)


def apply_blur(img, kernel: BlurKernel) -> np.ndarray:
    arr = check_image(img)
    if kernel.length <= 1:
        return np.clip(arr, 0.0, 1.0)
    k = line_kernel(kernel.length, kernel.angle)
    if arr.ndim == 2:
        out = ndimage.convolve(arr, k, mode="nearest")
    else:
        out = np.stack([ndimage.convolve(arr[..., ch], k, mode="nearest") for ch in range(arr.shape[2])], axis=-1)
    return np.clip(out, 0.0, 1.0)


def motion_blur_sequence(frames, nose_track, spec: PerturbSpec) -> tuple[list[np.ndarray], list[BlurKernel]]:
    """Blur each frame along the nose-tip motion around it.

    ``nose_track`` is one (x, y) per frame. Returns (frames, kernels).
    """
    if spec.kind is not PerturbKind.MOTION_BLUR:
        raise ValueError(f"motion_blur_sequence needs a motion-blur spec, got {spec.kind.value}")
    if len(frames) != len(nose_track):
        raise ValueError(f"{len(frames)} frames but {len(nose_track)} track points")
    if len(frames) < 3:
        raise ValueError(f"motion blur needs at least 3 frames, got {len(frames)}")
    track = np.array([tuple(p) for p in nose_track], dtype=np.float64)
    if track.shape[1] != 2 or not np.isfinite(track).all():
        raise ValueError("nose track must be finite (x, y) points")
    kernels = [blur_kernel_for(d, spec) for d in blur_directions(track)]
    return [apply_blur(f, k) for f, k in zip(frames, kernels)], kernels
