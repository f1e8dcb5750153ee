"""Dense 2-D kernels with hand-written backward passes.

Every array here is a float64 ``numpy.ndarray`` with rows as positions and
columns as features. Forward functions validate shapes and finiteness;
backward functions take the upstream gradient plus whatever the forward
needed and return input gradients.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """A kernel produced or received NaN/Inf."""


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Coerce ``data`` into a finite, non-empty 2-D float64 array."""
    m = np.array(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name}: expected 2-D data, got {m.ndim}-D")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name}: zero-size matrix {m.shape} is not allowed")
    check_finite(m, name)
    return m


def check_finite(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name}: non-finite values")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return check_finite(a @ b, "matmul")


def matmul_backward(dout: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Return ``(da, db)`` for ``out = a @ b``."""
    return dout @ b.T, a.T @ dout


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    check_finite(m, "softmax_rows input")
    z = m - m.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(dout: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Gradient through ``p = softmax_rows(x)`` given the forward output."""
    return p * (dout - np.sum(dout * p, axis=1, keepdims=True))


def global_average_pool(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Column means over valid rows, shape ``(1, d)``."""
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"global_average_pool: empty or non-2-D input {x.shape}")
    if mask is None:
        return x.mean(axis=0, keepdims=True)
    valid = _check_mask(mask, x.shape[0])
    return x[valid].mean(axis=0, keepdims=True)


def global_average_pool_backward(
    dout: np.ndarray, n: int, mask: np.ndarray | None = None
) -> np.ndarray:
    if mask is None:
        return np.repeat(dout / n, n, axis=0)
    valid = _check_mask(mask, n)
    dx = np.zeros((n, dout.shape[1]))
    dx[valid] = dout / valid.sum()
    return dx


def _check_mask(mask, n: int) -> np.ndarray:
    valid = np.asarray(mask, dtype=bool)
    if valid.shape != (n,):
        raise ShapeError(f"mask length {valid.shape} does not match {n} positions")
    if not valid.any():
        raise ValueError("mask has no valid positions")
    return valid


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function, evaluated without overflow for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dout: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Gradient given the forward output ``s``."""
    return dout * s * (1.0 - s)


def layer_norm(x: np.ndarray, gain: np.ndarray, offset: np.ndarray, eps: float = 1e-5):
    """Normalize each row; returns ``(out, cache)``."""
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv
    return xhat * gain + offset, (xhat, inv)


def layer_norm_backward(dout: np.ndarray, gain: np.ndarray, cache):
    """Return ``(dx, dgain, doffset)``."""
    xhat, inv = cache
    dgain = np.sum(dout * xhat, axis=0, keepdims=True)
    doffset = np.sum(dout, axis=0, keepdims=True)
    dxhat = dout * gain
    d = xhat.shape[1]
    dx = inv / d * (
        d * dxhat
        - dxhat.sum(axis=1, keepdims=True)
        - xhat * np.sum(dxhat * xhat, axis=1, keepdims=True)
    )
    return dx, dgain, doffset
