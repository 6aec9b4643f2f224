"""Array validation and the softmax front-end shared by every loss."""

from __future__ import annotations

import numpy as np

NORMALIZED_ATOL = 1e-9


def as_grid(values, name: str = "heatmap", min_side: int = 1) -> np.ndarray:
    """Return ``values`` as a finite float64 2D array or raise ``ValueError``.

    The message names the first offending cell so a bad heatmap in a batch is
    easy to locate.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    if min(arr.shape) < min_side:
        raise ValueError(f"{name} must be at least {min_side}x{min_side}, got {arr.shape}")
    bad = ~np.isfinite(arr)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValueError(f"{name} has non-finite value {arr[r, c]} at cell (row={r}, col={c})")
    return arr


def is_normalized(hm: np.ndarray, atol: float = NORMALIZED_ATOL) -> bool:
    return bool((hm >= 0).all() and abs(hm.sum() - 1.0) <= atol)


def check_normalized(values, name: str = "heatmap", min_side: int = 1, atol: float = NORMALIZED_ATOL) -> np.ndarray:
    hm = as_grid(values, name, min_side)
    if (hm < 0).any():
        r, c = np.argwhere(hm < 0)[0]
        raise ValueError(f"{name} is not a distribution: negative value at (row={r}, col={c})")
    total = hm.sum()
    if total <= 0:
        raise ValueError(f"{name} has zero total mass")
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} is not normalized: sums to {total!r}")
    return hm


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def softmax_normalize(logits) -> np.ndarray:
    """Spatial softmax over a whole logit grid."""
    z = as_grid(logits, "logits")
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. ``p = softmax(z)`` back to ``z``."""
    return p * (grad_p - np.sum(p * grad_p))
