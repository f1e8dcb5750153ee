"""Pure-Python/numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` must agree with them
bit for bit.
"""

from __future__ import annotations

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def ngram_buckets(token: str, minn: int, maxn: int, nbuckets: int) -> np.ndarray:
    """Bucket ids of the character n-grams of ``<token>``.

    n counts code points; each n-gram is hashed over its UTF-8 bytes.
    Ordered by start position, then by n.
    """
    word = "<" + token + ">"
    out = []
    for i in range(len(word)):
        for n in range(minn, maxn + 1):
            if i + n > len(word):
                break
            out.append(fnv1a64(word[i:i + n].encode("utf-8")) % nbuckets)
    return np.array(out, dtype=np.int64)


def bag_mean(weights: np.ndarray, idx: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Mean of ``weights[idx[offsets[b]:offsets[b+1]]]`` for every bag ``b``."""
    m = len(offsets) - 1
    out = np.zeros((m, weights.shape[1]))
    for b in range(m):
        lo, hi = offsets[b], offsets[b + 1]
        out[b] = weights[idx[lo:hi]].sum(axis=0) / (hi - lo)
    return out


def bag_mean_backward(
    dout: np.ndarray, idx: np.ndarray, offsets: np.ndarray, nrows: int
) -> np.ndarray:
    """Scatter bag gradients back onto ``nrows`` rows."""
    grad = np.zeros((nrows, dout.shape[1]))
    for b in range(len(offsets) - 1):
        lo, hi = offsets[b], offsets[b + 1]
        np.add.at(grad, idx[lo:hi], dout[b] / (hi - lo))
    return grad
