"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
versions are. Setting ``ATTNSENT_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

if os.environ.get("ATTNSENT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

fnv1a64 = _impl.fnv1a64
ngram_buckets = _impl.ngram_buckets


def bag_mean(weights, idx, offsets) -> np.ndarray:
    return _impl.bag_mean(
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(idx, dtype=np.int64),
        np.ascontiguousarray(offsets, dtype=np.int64),
    )


def bag_mean_backward(dout, idx, offsets, nrows: int) -> np.ndarray:
    return _impl.bag_mean_backward(
        np.ascontiguousarray(dout, dtype=np.float64),
        np.ascontiguousarray(idx, dtype=np.int64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        nrows,
    )
