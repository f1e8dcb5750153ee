import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnsent import _kernels, _pykernels

ckernels = pytest.importorskip("attnsent._ckernels")


def test_backend_selected():
    assert _kernels.BACKEND in ("cython", "python")


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=12), st.integers(1, 4), st.integers(0, 3),
       st.sampled_from([1, 97, 2 ** 20, 2 ** 63]))
def test_ngram_buckets_agree(token, minn, extra, buckets):
    maxn = minn + extra
    np.testing.assert_array_equal(ckernels.ngram_buckets(token, minn, maxn, buckets),
                                  _pykernels.ngram_buckets(token, minn, maxn, buckets))


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=64))
def test_fnv_agrees(data):
    assert ckernels.fnv1a64(data) == _pykernels.fnv1a64(data)


def test_bag_kernels_agree(rng):
    for _ in range(30):
        rows, d = int(rng.integers(1, 20)), int(rng.integers(1, 9))
        weights = rng.normal(size=(rows, d))
        sizes = rng.integers(1, 6, int(rng.integers(1, 7)))
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        idx = rng.integers(0, rows, offsets[-1]).astype(np.int64)
        np.testing.assert_allclose(ckernels.bag_mean(weights, idx, offsets),
                                   _pykernels.bag_mean(weights, idx, offsets), atol=1e-14)
        dout = rng.normal(size=(len(sizes), d))
        np.testing.assert_allclose(ckernels.bag_mean_backward(dout, idx, offsets, rows),
                                   _pykernels.bag_mean_backward(dout, idx, offsets, rows),
                                   atol=1e-14)


def test_bag_backward_is_adjoint(rng):
    weights = rng.normal(size=(6, 3))
    offsets = np.array([0, 2, 5, 6], dtype=np.int64)
    idx = np.array([0, 1, 1, 2, 5, 4], dtype=np.int64)
    dout = rng.normal(size=(3, 3))
    lhs = np.sum(_kernels.bag_mean(weights, idx, offsets) * dout)
    rhs = np.sum(weights * _kernels.bag_mean_backward(dout, idx, offsets, 6))
    assert lhs == pytest.approx(rhs, rel=1e-12)
