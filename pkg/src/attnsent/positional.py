"""Sinusoidal positional encodings and the two ways of fusing them."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError

BASE = 10000.0


def sinusoidal_pe(length: int, d_pe: int) -> np.ndarray:
    """Position encodings for positions ``1..length`` (1-based).

    Even column ``2i`` holds ``sin(pos / BASE**(2i/d_pe))`` and odd column
    ``2i+1`` the matching cosine.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if d_pe < 2 or d_pe % 2:
        raise ValueError(f"d_pe must be even and >= 2, got {d_pe}")
    pos = np.arange(1, length + 1, dtype=np.float64)[:, None]
    freq = BASE ** (np.arange(0, d_pe, 2, dtype=np.float64) / d_pe)
    angles = pos / freq
    pe = np.empty((length, d_pe))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


class PECache:
    """Precomputed encodings that grow on demand for longer sequences."""

    def __init__(self, d_pe: int, max_len: int):
        self.d_pe = d_pe
        self._table = sinusoidal_pe(max_len, d_pe)

    def get(self, length: int) -> np.ndarray:
        if length > self._table.shape[0]:
            # rebuilt rather than mutated in place so readers never see a partial table
            self._table = sinusoidal_pe(length, self.d_pe)
        return self._table[:length]


def fuse_add(emb: np.ndarray, pe: np.ndarray) -> np.ndarray:
    if emb.shape != pe.shape:
        raise ShapeError(f"fuse_add: {emb.shape} vs {pe.shape}")
    return emb + pe


def fuse_concat(emb: np.ndarray, pe: np.ndarray) -> np.ndarray:
    """Embedding columns first, PE columns after."""
    if emb.shape[0] != pe.shape[0]:
        raise ShapeError(f"fuse_concat: row counts {emb.shape[0]} vs {pe.shape[0]}")
    return np.concatenate([emb, pe], axis=1)


def fuse_backward(dout: np.ndarray, fusion: str, d_emb: int) -> np.ndarray:
    """Gradient reaching the embeddings; the PE part has no parameters."""
    if fusion == "add":
        return dout
    return dout[:, :d_emb]
