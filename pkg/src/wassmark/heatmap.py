"""Gaussian target synthesis and coordinate decoding.

Coordinates: x is the column index, y the row index, origin at the centre of
the top-left cell.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from wassmark.ot.common import as_grid, check_normalized, softmax_normalize


class BoundaryWarning(UserWarning):
    """Target centre closer than 3 sigma to an edge of the grid."""


class Amplitude(str, enum.Enum):
    PEAK_ONE = "peak-one"
    NORMALIZED = "normalized"


class Decoder(str, enum.Enum):
    GET_MAX = "get_max"
    GET_BC = "get_bc"


@dataclass(frozen=True)
class LandmarkPoint:
    x: float
    y: float
    degenerate: bool = False

    def __iter__(self):
        yield self.x
        yield self.y

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class TargetSpec:
    sigma: float
    height: int = 64
    width: int = 64
    amplitude: Amplitude = Amplitude.NORMALIZED

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        object.__setattr__(self, "amplitude", Amplitude(self.amplitude))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


def in_bounds(x: float, y: float, shape) -> bool:
    h, w = shape
    return bool(np.isfinite(x) and np.isfinite(y) and 0 <= x <= w - 1 and 0 <= y <= h - 1)


def edge_distance(x: float, y: float, shape) -> float:
    h, w = shape
    return float(min(x, y, w - 1 - x, h - 1 - y))


def make_gaussian_target(center, spec: TargetSpec, *, warn: bool = True) -> np.ndarray:
    """Isotropic Gaussian evaluated at the integer cell positions."""
    x, y = (float(c) for c in center)
    if not in_bounds(x, y, spec.shape):
        raise ValueError(f"centre ({x}, {y}) outside the {spec.height}x{spec.width} grid")
    if warn and edge_distance(x, y, spec.shape) < 3 * spec.sigma:
        warnings.warn(
            f"centre ({x:.3g}, {y:.3g}) is within 3 sigma ({3 * spec.sigma:.3g} px) of the grid edge",
            BoundaryWarning,
            stacklevel=2,
        )
    gx = np.exp(-((np.arange(spec.width) - x) ** 2) / (2 * spec.sigma**2))
    gy = np.exp(-((np.arange(spec.height) - y) ** 2) / (2 * spec.sigma**2))
    hm = np.outer(gy, gx)
    if spec.amplitude is Amplitude.PEAK_ONE:
        return hm / hm.max()
    return hm / hm.sum()


def decode_get_max(hm) -> LandmarkPoint:
    """Argmax cell, nudged 0.25 px toward the larger neighbour on each axis."""
    hm = as_grid(hm, "heatmap", min_side=1)
    h, w = hm.shape
    if np.all(hm == hm.flat[0]):
        return LandmarkPoint((w - 1) / 2, (h - 1) / 2, degenerate=True)
    y, x = np.unravel_index(int(np.argmax(hm)), hm.shape)
    px, py = float(x), float(y)
    if 0 < x < w - 1 and hm[y, x + 1] != hm[y, x - 1]:
        px += 0.25 if hm[y, x + 1] > hm[y, x - 1] else -0.25
    if 0 < y < h - 1 and hm[y + 1, x] != hm[y - 1, x]:
        py += 0.25 if hm[y + 1, x] > hm[y - 1, x] else -0.25
    return LandmarkPoint(px, py)


def decode_get_bc(hm) -> LandmarkPoint:
    """Spatial barycenter of a normalized heatmap."""
    hm = check_normalized(hm, "heatmap", min_side=1)
    h, w = hm.shape
    x = float(np.sum(hm.sum(axis=0) * np.arange(w)))
    y = float(np.sum(hm.sum(axis=1) * np.arange(h)))
    # sum(hm) can differ from 1 by the normalization tolerance
    return LandmarkPoint(min(max(x, 0.0), w - 1.0), min(max(y, 0.0), h - 1.0))


def decode(hm, method: Decoder | str, *, logits: bool = False) -> LandmarkPoint:
    method = Decoder(method)
    if method is Decoder.GET_MAX:
        return decode_get_max(hm)
    return decode_get_bc(softmax_normalize(hm) if logits else hm)


def decode_batch(hms, method: Decoder | str, scale: float = 1.0, *, logits: bool = False) -> np.ndarray:
    """Decode a stack of heatmaps and map to the image frame.

    Returns an (N, 2) array of (x, y) multiplied by ``scale``.
    """
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    if len(hms) == 0:
        return np.zeros((0, 2))
    shapes = {np.shape(h) for h in hms}
    if len(shapes) != 1:
        raise ValueError(f"heatmaps must share one shape, got {sorted(shapes)}")
    pts = [decode(h, method, logits=logits) for h in hms]
    return np.array([[p.x, p.y] for p in pts]) * scale
