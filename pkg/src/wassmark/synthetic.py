"""Synthetic 68-point faces, spot images and a toy detector.

Used for the CLI round trip and for checking that perturbations degrade a
fixed decoding pipeline. Nothing here models real faces beyond layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wassmark.heatmap import decode_get_bc


def _arc(n, cx, cy, rx, ry, t0, t1):
    t = np.linspace(t0, t1, n)
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def _loop(n, cx, cy, rx, ry):
    t = np.pi + 2 * np.pi * np.arange(n) / n
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def face68(center=(128.0, 128.0), size: float = 120.0, rng: np.random.Generator | None = None, jitter: float = 0.0):
    """A 68-point layout in the usual jaw/brows/nose/eyes/mouth order.

    Image axes: y grows downward, so the jaw is the lower half-ellipse.
    """
    cx, cy = center
    s = size / 2
    parts = [
        _arc(17, cx, cy - 0.1 * s, 0.95 * s, 1.0 * s, np.pi, 0.0),
        _arc(5, cx - 0.45 * s, cy - 0.45 * s, 0.3 * s, 0.12 * s, np.pi, 2 * np.pi),
        _arc(5, cx + 0.45 * s, cy - 0.45 * s, 0.3 * s, 0.12 * s, np.pi, 2 * np.pi),
        np.stack([np.full(4, cx), np.linspace(cy - 0.3 * s, cy + 0.1 * s, 4)], axis=1),
        _arc(5, cx, cy + 0.1 * s, 0.2 * s, 0.08 * s, 0.8 * np.pi, 0.2 * np.pi),
        _loop(6, cx - 0.4 * s, cy - 0.25 * s, 0.16 * s, 0.07 * s),
        _loop(6, cx + 0.4 * s, cy - 0.25 * s, 0.16 * s, 0.07 * s),
        _loop(12, cx, cy + 0.5 * s, 0.35 * s, 0.15 * s),
        _loop(8, cx, cy + 0.5 * s, 0.22 * s, 0.06 * s),
    ]
    pts = np.concatenate(parts)
    if rng is not None and jitter > 0:
        pts = pts + rng.normal(scale=jitter, size=pts.shape)
    return pts


EYE_OUTER_CORNERS = (36, 45)


def render_spots(points, shape, sigma: float = 1.5) -> np.ndarray:
    """Dark image with a unit-peak Gaussian spot per landmark, clipped to [0, 1]."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w))
    for x, y in np.asarray(points, dtype=np.float64):
        img += np.exp(-((xs - x) ** 2 + (ys - y) ** 2) / (2 * sigma**2))
    return np.clip(img, 0.0, 1.0)


@dataclass(frozen=True)
class SpotDetector:
    """Brightest cell within ``search`` px of a prior, refined by the
    barycenter of the (2 * refine + 1)^2 patch around it.

    A tiny floor keeps an all-black patch decodable; it then returns the
    patch centre.
    """

    search: int = 5
    refine: int = 2
    floor: float = 1e-6

    def locate(self, img: np.ndarray, prior) -> np.ndarray:
        gray = img if img.ndim == 2 else img.mean(axis=2)
        px, py = (int(round(v)) for v in prior)
        (x0, x1), (y0, y1) = self._window(gray.shape, px, py, self.search)
        win = gray[y0:y1, x0:x1]
        wy, wx = np.unravel_index(int(np.argmax(win)), win.shape)
        (x0, x1), (y0, y1) = self._window(gray.shape, x0 + int(wx), y0 + int(wy), self.refine)
        patch = gray[y0:y1, x0:x1] + self.floor
        p = decode_get_bc(patch / patch.sum())
        return np.array([x0 + p.x, y0 + p.y])

    @staticmethod
    def _window(shape, x, y, r):
        h, w = shape
        return (max(x - r, 0), min(x + r + 1, w)), (max(y - r, 0), min(y + r + 1, h))

    def __call__(self, img: np.ndarray, priors) -> np.ndarray:
        return np.array([self.locate(img, p) for p in priors])
