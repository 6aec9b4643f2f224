"""Reference heatmap losses: pixel L2, Jensen-Shannon and soft-argmax.

Each returns ``(value, gradient)``. Losses that take logits return the
gradient w.r.t. the logits, i.e. through the softmax.
"""

from __future__ import annotations

import numpy as np

from wassmark.ot.common import as_grid, check_normalized, check_same_shape, softmax_backward, softmax_normalize


def l2_heatmap_loss(pred, target) -> tuple[float, np.ndarray]:
    """Sum of squared pixel differences and its gradient w.r.t. ``pred``."""
    p = as_grid(pred, "pred")
    t = as_grid(target, "target")
    check_same_shape(p, t)
    d = p - t
    return float(np.sum(d * d)), 2.0 * d


def l2_softmax_loss(logits, target) -> tuple[float, np.ndarray]:
    """Pixel L2 between ``softmax(logits)`` and a normalized target."""
    p = softmax_normalize(logits)
    value, grad_p = l2_heatmap_loss(p, check_normalized(target, "target"))
    return value, softmax_backward(p, grad_p)


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence (natural log) between two distributions."""
    p = check_normalized(p, "p")
    q = check_normalized(q, "q")
    check_same_shape(p, q)
    m = 0.5 * (p + q)
    return float(0.5 * _kl(p, m) + 0.5 * _kl(q, m))


def _kl(p, m):
    nz = p > 0
    return np.sum(p[nz] * np.log(p[nz] / m[nz]))


def js_divergence_loss(logits_pred, target) -> tuple[float, np.ndarray]:
    t = check_normalized(target, "target")
    p = softmax_normalize(logits_pred)
    check_same_shape(p, t)
    m = 0.5 * (p + t)
    value = 0.5 * _kl(p, m) + 0.5 * _kl(t, m)
    # d JS / d p_i = 0.5 log(p_i / m_i); p > 0 after the softmax
    grad_p = 0.5 * np.log(p / m)
    return float(max(value, 0.0)), softmax_backward(p, grad_p)


def _check_point(point, shape):
    x, y = (float(c) for c in point)
    h, w = shape
    if not (np.isfinite(x) and np.isfinite(y)) or not (0 <= x <= w - 1 and 0 <= y <= h - 1):
        raise ValueError(f"point ({x}, {y}) outside the {h}x{w} grid")
    return np.array([x, y])


def soft_argmax_value(p, gt_point) -> tuple[float, np.ndarray]:
    """Squared distance, in normalized units, from the barycenter of ``p`` to
    ``gt_point`` (x, y in pixels), and its gradient w.r.t. ``p``."""
    p = check_normalized(p, "heatmap")
    h, w = p.shape
    gt = _check_point(gt_point, p.shape)
    scale = max(h - 1, w - 1)
    ys, xs = np.mgrid[0:h, 0:w]
    diff = (np.array([np.sum(p * xs), np.sum(p * ys)]) - gt) / scale
    grad_p = 2.0 * (diff[0] * xs + diff[1] * ys) / scale
    return float(diff @ diff), grad_p


def soft_argmax_loss(logits_pred, gt_point) -> tuple[float, np.ndarray]:
    p = softmax_normalize(logits_pred)
    value, grad_p = soft_argmax_value(p, gt_point)
    return value, softmax_backward(p, grad_p)
