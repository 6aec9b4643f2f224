"""Landmark evaluation: NME, image- and landmark-wise failure rates, CED, AUC.

Failures are counted with a strict inequality, ``NME > theta``. Landmarks
flagged invisible in the ground truth are left out of every aggregate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np


def nme_landmark(pred, gt, d: float) -> float:
    if not d > 0:
        raise ValueError(f"normalization distance must be > 0, got {d}")
    dx = float(pred[0]) - float(gt[0])
    dy = float(pred[1]) - float(gt[1])
    return math.hypot(dx, dy) / d


@dataclass(frozen=True)
class LandmarkSet:
    points: np.ndarray  # (M, 2) of (x, y)
    visible: np.ndarray | None = None  # (M,) bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 1:
            raise ValueError(f"landmarks must be an (M, 2) array with M >= 1, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError(f"landmark {int(np.argwhere(~np.isfinite(pts))[0, 0])} is not finite")
        object.__setattr__(self, "points", pts)
        if self.visible is not None:
            vis = np.asarray(self.visible, dtype=bool)
            if vis.shape != (len(pts),):
                raise ValueError(f"visibility must have {len(pts)} entries, got {vis.shape}")
            object.__setattr__(self, "visible", vis)

    def __len__(self):
        return len(self.points)

    def visibility(self) -> np.ndarray:
        return np.ones(len(self), dtype=bool) if self.visible is None else self.visible

    def select(self, indices) -> "LandmarkSet":
        idx = np.asarray(indices, dtype=np.intp)
        return LandmarkSet(self.points[idx], None if self.visible is None else self.visible[idx])

    def scaled(self, factor: float) -> "LandmarkSet":
        return LandmarkSet(self.points * factor, self.visible)


class NormKind(str, enum.Enum):
    INTER_OCULAR = "inter-ocular"
    BBOX_WIDTH = "bbox-width"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class NormalizationRule:
    """How d_i is obtained for one image.

    ``eyes`` holds two index groups; each eye is the mean of its landmarks
    (a single index is the common outer-corner convention). ``value`` is the
    bounding-box width or the explicit distance.
    """

    kind: NormKind
    eyes: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    value: float | None = None

    def __post_init__(self):
        kind = NormKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is NormKind.INTER_OCULAR:
            if self.eyes is None or len(self.eyes) != 2:
                raise ValueError("inter-ocular normalization needs two eye index groups")
            eyes = tuple(tuple(int(i) for i in np.atleast_1d(e)) for e in self.eyes)
            if not all(eyes):
                raise ValueError("eye index groups must be non-empty")
            object.__setattr__(self, "eyes", eyes)
        elif self.value is None or not (np.isfinite(self.value) and self.value > 0):
            raise ValueError(f"{kind.value} normalization needs a positive value, got {self.value}")

    @classmethod
    def inter_ocular(cls, left, right) -> "NormalizationRule":
        return cls(NormKind.INTER_OCULAR, eyes=(left, right))

    @classmethod
    def bbox_width(cls, width: float) -> "NormalizationRule":
        return cls(NormKind.BBOX_WIDTH, value=float(width))

    @classmethod
    def explicit(cls, d: float) -> "NormalizationRule":
        return cls(NormKind.EXPLICIT, value=float(d))

    def distance(self, gt: LandmarkSet) -> float:
        if self.kind is not NormKind.INTER_OCULAR:
            return float(self.value)
        m = len(gt)
        for i in self.eyes[0] + self.eyes[1]:
            if not 0 <= i < m:
                raise ValueError(f"eye index {i} out of range for {m} landmarks")
        left = gt.points[list(self.eyes[0])].mean(axis=0)
        right = gt.points[list(self.eyes[1])].mean(axis=0)
        d = math.hypot(*(left - right))
        if not d > 0:
            raise ValueError("eye landmarks coincide: inter-ocular distance is 0")
        return d

    def scaled(self, factor: float) -> "NormalizationRule":
        if self.kind is NormKind.INTER_OCULAR:
            return self
        return replace(self, value=self.value * factor)


@dataclass(frozen=True)
class ImagePair:
    pred: LandmarkSet
    gt: LandmarkSet
    norm: NormalizationRule
    image_id: str = ""

    def __post_init__(self):
        if len(self.pred) != len(self.gt):
            raise ValueError(
                f"image {self.image_id!r}: {len(self.pred)} predicted vs {len(self.gt)} ground-truth landmarks"
            )


@dataclass(frozen=True)
class EvalPairing:
    images: tuple[ImagePair, ...]

    def __post_init__(self):
        images = tuple(self.images)
        if not images:
            raise ValueError("evaluation needs at least one image")
        m = {len(p.gt) for p in images}
        if len(m) != 1:
            raise ValueError(f"images disagree on the landmark count: {sorted(m)}")
        object.__setattr__(self, "images", images)

    @property
    def n_landmarks(self) -> int:
        return len(self.images[0].gt)

    def __len__(self):
        return len(self.images)


@dataclass
class EvalReport:
    nme_per_landmark: np.ndarray  # (N, M), NaN where invisible
    nme_per_image: np.ndarray  # (N,), NaN for images with no visible landmark
    nme: float
    fr_image: dict[float, float]
    fr_landmark: dict[float, float]
    ced_grid: np.ndarray
    ced: np.ndarray
    auc: dict[float, float]
    image_wise_ced: bool = False
    image_ids: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "n_images": int(self.nme_per_landmark.shape[0]),
            "n_landmarks": int(self.nme_per_landmark.shape[1]),
            "nme": self.nme,
            "fr_image": {repr(k): v for k, v in self.fr_image.items()},
            "fr_landmark": {repr(k): v for k, v in self.fr_landmark.items()},
            "auc": {repr(k): v for k, v in self.auc.items()},
            "ced": "image-wise" if self.image_wise_ced else "landmark-wise",
        }


def nme_matrix(pairing: EvalPairing) -> np.ndarray:
    n, m = len(pairing), pairing.n_landmarks
    out = np.full((n, m), np.nan)
    for i, pair in enumerate(pairing.images):
        d = pair.norm.distance(pair.gt)
        vis = pair.gt.visibility()
        for j in range(m):
            if vis[j]:
                out[i, j] = nme_landmark(pair.pred.points[j], pair.gt.points[j], d)
    return out


def _mean(values: np.ndarray) -> float:
    # fsum is exactly rounded, so the result does not depend on image order
    return math.fsum(values) / len(values) if len(values) else float("nan")


def _per_image(nme: np.ndarray) -> np.ndarray:
    return np.array([_mean(row[~np.isnan(row)]) for row in nme])


def failure_rate_image(per_image: np.ndarray, theta: float) -> float:
    valid = per_image[~np.isnan(per_image)]
    return int(np.count_nonzero(valid > theta)) / len(valid)


def failure_rate_landmark(nme: np.ndarray, theta: float) -> float:
    rates = []
    for col in nme.T:
        col = col[~np.isnan(col)]
        if len(col):
            rates.append(int(np.count_nonzero(col > theta)) / len(col))
    return math.fsum(rates) / len(rates)


def auc(grid: np.ndarray, ced: np.ndarray, ceiling: float) -> float:
    """Trapezoidal area under a CED curve on [0, ceiling], over ceiling."""
    if not ceiling > 0:
        raise ValueError(f"AUC ceiling must be > 0, got {ceiling}")
    keep = grid <= ceiling
    xs, ys = grid[keep], ced[keep]
    if len(xs) == 0 or xs[-1] < ceiling:
        xs = np.append(xs, ceiling)
        ys = np.append(ys, np.interp(ceiling, grid, ced))
    if xs[0] > 0:
        # below the first grid point the curve is unknown; treat it as 0
        xs, ys = np.insert(xs, 0, 0.0), np.insert(ys, 0, 0.0)
    return float(np.trapezoid(ys, xs) / ceiling)


def evaluate(
    pairing: EvalPairing,
    thresholds: Sequence[float] = (0.08, 0.1),
    ced_grid: Sequence[float] | None = None,
    auc_ceilings: Sequence[float] | None = None,
    *,
    image_wise_ced: bool = False,
) -> EvalReport:
    if ced_grid is None:
        ced_grid = np.linspace(0.0, 0.1, 1001)
    grid = np.asarray(ced_grid, dtype=np.float64)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("ced_grid must be increasing, non-negative, with at least 2 points")
    nme = nme_matrix(pairing)
    per_image = _per_image(nme)
    if np.all(np.isnan(per_image)):
        raise ValueError("no visible ground-truth landmark in the pairing")
    fr_i = {float(t): failure_rate_image(per_image, t) for t in thresholds}
    fr_l = {float(t): failure_rate_landmark(nme, t) for t in thresholds}
    rate = (lambda t: failure_rate_image(per_image, t)) if image_wise_ced else (lambda t: failure_rate_landmark(nme, t))
    ced = np.array([1.0 - rate(t) for t in grid])
    ceilings = [grid[-1]] if auc_ceilings is None else auc_ceilings
    return EvalReport(
        nme_per_landmark=nme,
        nme_per_image=per_image,
        nme=_mean(per_image[~np.isnan(per_image)]),
        fr_image=fr_i,
        fr_landmark=fr_l,
        ced_grid=grid,
        ced=ced,
        auc={float(c): auc(grid, ced, float(c)) for c in ceilings},
        image_wise_ced=image_wise_ced,
        image_ids=[p.image_id for p in pairing.images],
    )


@dataclass(frozen=True)
class LandmarkMapping:
    """Selection from a ``source_size``-point format: ``out[k] = src[indices[k]]``."""

    source_size: int
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("landmark mapping is empty")
        bad = [i for i in idx if not 0 <= i < self.source_size]
        if bad:
            raise ValueError(f"mapping index {bad[0]} out of range for a {self.source_size}-point format")
        object.__setattr__(self, "indices", idx)

    @property
    def target_size(self) -> int:
        return len(self.indices)

    def apply(self, landmarks: LandmarkSet) -> LandmarkSet:
        if len(landmarks) != self.source_size:
            raise ValueError(f"mapping expects {self.source_size} landmarks, got {len(landmarks)}")
        return landmarks.select(self.indices)

    def then(self, other: "LandmarkMapping") -> "LandmarkMapping":
        """``other`` applied after ``self``."""
        if other.source_size != self.target_size:
            raise ValueError(f"cannot compose: {self.target_size}-point output into {other.source_size}-point input")
        return LandmarkMapping(self.source_size, tuple(self.indices[i] for i in other.indices))

    @classmethod
    def identity(cls, size: int) -> "LandmarkMapping":
        return cls(size, tuple(range(size)))


def project_common(
    pred_size: int, gt_size: int, pairs: Sequence[tuple[int, int]]
) -> Callable[[EvalPairing], EvalPairing]:
    """Restrict a pairing to common landmarks given (pred_index, gt_index) pairs.

    Normalization distances are resolved on the full ground truth first, so an
    inter-ocular rule keeps using the original eye landmarks.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("common-landmark mapping is empty")
    pred_map = LandmarkMapping(pred_size, tuple(p for p, _ in pairs))
    gt_map = LandmarkMapping(gt_size, tuple(g for _, g in pairs))

    def transform(pairing: EvalPairing) -> EvalPairing:
        images = []
        for p in pairing.images:
            d = p.norm.distance(p.gt)
            images.append(ImagePair(pred_map.apply(p.pred), gt_map.apply(p.gt), NormalizationRule.explicit(d), p.image_id))
        return EvalPairing(tuple(images))

    return transform
