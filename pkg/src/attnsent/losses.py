"""Focal cross-entropy over a two-class softmax."""

from __future__ import annotations

import numpy as np

P_MIN = 1e-12


def _alpha_for(alpha, y: int) -> float:
    if np.ndim(alpha) == 0:
        return float(alpha)
    return float(alpha[y])


def _check_probs(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if (not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1)
            or abs(p.sum() - 1.0) > 1e-9):
        raise ValueError(f"not a probability vector: {p}")
    return p


def focal_loss(p, y: int, gamma: float = 2.0, alpha=1.0) -> float:
    """``-alpha_y * (1 - p_y)**gamma * log(p_y)`` with ``p_y`` clamped to [1e-12, 1]."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    p = _check_probs(p)
    py = min(max(p[y], P_MIN), 1.0)
    return -_alpha_for(alpha, y) * (1.0 - py) ** gamma * np.log(py)


def focal_loss_grad_logits(p, y: int, gamma: float = 2.0, alpha=1.0) -> np.ndarray:
    """Gradient of :func:`focal_loss` w.r.t. the logits that produced ``p``."""
    p = _check_probs(p)
    py = p[y]
    if py < P_MIN:
        return np.zeros_like(p)
    q = 1.0 - py
    dpy = q ** gamma / py
    if gamma > 0 and q > 0:
        dpy -= gamma * q ** (gamma - 1.0) * np.log(py)
    dpy *= -_alpha_for(alpha, y)
    onehot = np.zeros_like(p)
    onehot[y] = 1.0
    return dpy * py * (onehot - p)
