"""Squeeze-excitation gate over embedding features.

The sequence is averaged over valid positions, passed through a
reduce-then-expand bottleneck (relu, then sigmoid) and the resulting per-feature
gate in (0, 1) rescales every position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    ShapeError,
    global_average_pool,
    global_average_pool_backward,
    relu,
    sigmoid,
)


@dataclass
class SEParams:
    w_fc1: np.ndarray  # d_model x d_model/r
    w_fc2: np.ndarray  # d_model/r x d_model

    @property
    def d_model(self) -> int:
        return self.w_fc1.shape[0]

    @classmethod
    def init(cls, d_model: int, r: int, rng: np.random.Generator) -> "SEParams":
        if r < 1 or d_model % r:
            raise ValueError(f"reduction ratio {r} does not divide d_model={d_model}")
        hidden = d_model // r
        return cls(
            rng.uniform(-1, 1, (d_model, hidden)) / np.sqrt(d_model),
            rng.uniform(-1, 1, (hidden, d_model)) / np.sqrt(hidden),
        )

    @classmethod
    def zeros(cls, d_model: int, r: int) -> "SEParams":
        return cls(np.zeros((d_model, d_model // r)), np.zeros((d_model // r, d_model)))


def squeeze_excite(x, params: SEParams, mask=None, *, return_cache: bool = False):
    if x.ndim != 2 or x.shape[1] != params.d_model:
        raise ShapeError(f"squeeze_excite: input {x.shape} vs d_model={params.d_model}")
    s = global_average_pool(x, mask)
    a = s @ params.w_fc1
    g = sigmoid(relu(a) @ params.w_fc2)
    out = x * g
    if return_cache:
        return out, (x, s, a, g, mask)
    return out


def gate(x, params: SEParams, mask=None) -> np.ndarray:
    """The ``(1, d_model)`` gate vector alone."""
    return squeeze_excite(x, params, mask, return_cache=True)[1][3]


def squeeze_excite_backward(dout, params: SEParams, cache):
    """Return ``(dx, {"w_fc1": ..., "w_fc2": ...})``."""
    x, s, a, g, mask = cache
    dg = np.sum(dout * x, axis=0, keepdims=True)
    dz = dg * g * (1.0 - g)
    hidden = relu(a)
    grads = {"w_fc2": hidden.T @ dz}
    da = (dz @ params.w_fc2.T) * (a > 0)
    grads["w_fc1"] = s.T @ da
    ds = da @ params.w_fc1.T
    dx = dout * g + global_average_pool_backward(ds, x.shape[0], mask)
    return dx, grads
