"""Seeded random heatmap-like distribution pairs for oracle comparisons.

Each side is a mixture of one to three Gaussian blobs plus a faint uniform
floor, the kind of map a landmark network emits. The two sides are drawn
independently, so most pairs need real transport rather than a local
reshuffle that entropic smoothing would dominate.
"""

from __future__ import annotations

import numpy as np


def random_blob_map(shape, rng: np.random.Generator, floor: float = 1e-3) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    hm = np.zeros((h, w))
    for _ in range(rng.integers(1, 4)):
        cx, cy = rng.uniform(0, w - 1), rng.uniform(0, h - 1)
        sigma = rng.uniform(0.3, max(0.6, 0.15 * max(h, w)))
        hm += rng.uniform(0.2, 1.0) * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * sigma**2))
    hm = hm / hm.sum() + floor / hm.size
    return hm / hm.sum()


def random_pair(shape, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    return random_blob_map(shape, rng), random_blob_map(shape, rng)
