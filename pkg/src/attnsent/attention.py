"""Scaled dot-product attention and multi-head self-attention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, _check_mask, softmax_rows, softmax_rows_backward

MASK_BIAS = -1e9


@dataclass
class AttentionHeadParams:
    wq: np.ndarray  # d_model x d_k
    wk: np.ndarray  # d_model x d_k
    wv: np.ndarray  # d_model x d_v


@dataclass
class MultiHeadParams:
    heads: list[AttentionHeadParams]
    wo: np.ndarray  # h*d_v x d_model

    def __post_init__(self):
        if not self.heads:
            raise ValueError("multi-head attention needs at least one head")
        shapes = {(h.wq.shape, h.wk.shape, h.wv.shape) for h in self.heads}
        if len(shapes) != 1:
            raise ShapeError("all heads must share identical projection shapes")
        d_model, d_k = self.heads[0].wq.shape
        if self.heads[0].wv.shape[1] != d_k:
            raise ShapeError("d_v must equal d_k")
        if d_k * len(self.heads) != d_model:
            raise ShapeError(
                f"head width {d_k} x {len(self.heads)} heads != d_model {d_model}"
            )
        if self.wo.shape != (d_model, d_model):
            raise ShapeError(f"W_o shape {self.wo.shape}, expected {(d_model, d_model)}")

    @property
    def d_model(self) -> int:
        return self.heads[0].wq.shape[0]

    @classmethod
    def init(cls, d_model: int, h: int, rng: np.random.Generator) -> "MultiHeadParams":
        if h < 1 or d_model % h:
            raise ValueError(f"{h} heads do not divide d_model={d_model}")
        d_k = d_model // h
        bound = 1.0 / np.sqrt(d_model)
        heads = [
            AttentionHeadParams(
                *(rng.uniform(-bound, bound, (d_model, d_k)) for _ in range(3))
            )
            for _ in range(h)
        ]
        return cls(heads, rng.uniform(-bound, bound, (d_model, d_model)))


def _mask_bias(mask, n: int) -> np.ndarray | float:
    if mask is None:
        return 0.0
    valid = _check_mask(mask, n)
    return np.where(valid, 0.0, MASK_BIAS)[None, :]


def scaled_dot_product(q, k, v, mask=None, *, return_weights: bool = False):
    """``softmax(q k^T / sqrt(d_k) + maskbias) v``.

    The scale uses the width of the keys actually passed in.
    """
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeError("scaled_dot_product expects 2-D operands")
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(
            f"incompatible Q{q.shape} K{k.shape} V{v.shape} for attention"
        )
    scores = (q @ k.T) / np.sqrt(k.shape[1]) + _mask_bias(mask, k.shape[0])
    weights = softmax_rows(scores)
    out = weights @ v
    return (out, weights) if return_weights else out


def scaled_dot_product_backward(dout, q, k, v, weights):
    """Return ``(dq, dk, dv)`` given the forward attention weights."""
    scale = 1.0 / np.sqrt(k.shape[1])
    dv = weights.T @ dout
    dscores = softmax_rows_backward(dout @ v.T, weights) * scale
    return dscores @ k, dscores.T @ q, dv


def multi_head(x, params: MultiHeadParams, mask=None, *, return_cache: bool = False):
    """Self-attention over ``x`` with every head reading the same sequence."""
    if x.ndim != 2 or x.shape[1] != params.d_model:
        raise ShapeError(f"input {x.shape} does not match d_model={params.d_model}")
    outs, cache = [], []
    for head in params.heads:
        q, k, v = x @ head.wq, x @ head.wk, x @ head.wv
        o, w = scaled_dot_product(q, k, v, mask, return_weights=True)
        outs.append(o)
        cache.append((q, k, v, w))
    concat = np.concatenate(outs, axis=1)
    out = concat @ params.wo
    if return_cache:
        return out, (x, concat, cache)
    return out


def multi_head_backward(dout, params: MultiHeadParams, cache):
    """Return ``(dx, grads)`` where grads maps ``wq.{i}``/``wk.{i}``/``wv.{i}``/``wo``."""
    x, concat, per_head = cache
    grads = {"wo": concat.T @ dout}
    dconcat = dout @ params.wo.T
    d_k = params.heads[0].wq.shape[1]
    dx = np.zeros_like(x)
    for i, (head, (q, k, v, w)) in enumerate(zip(params.heads, per_head)):
        dq, dk, dv = scaled_dot_product_backward(
            dconcat[:, i * d_k:(i + 1) * d_k], q, k, v, w
        )
        grads[f"wq.{i}"] = x.T @ dq
        grads[f"wk.{i}"] = x.T @ dk
        grads[f"wv.{i}"] = x.T @ dv
        dx += dq @ head.wq.T + dk @ head.wk.T + dv @ head.wv.T
    return dx, grads
