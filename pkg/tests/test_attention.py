import math

import numpy as np
import pytest

from attnsent.attention import (
    AttentionHeadParams,
    MultiHeadParams,
    multi_head,
    multi_head_backward,
    scaled_dot_product,
)
from attnsent.tensor import ShapeError
from attnsent.training import numeric_gradient, relative_error


def brute_attention(q, k, v, mask=None):
    """Element-by-element softmax(q k^T / sqrt(d)) v with Python floats."""
    m, n, d = len(q), len(k), len(k[0])
    out = []
    for i in range(m):
        scores = []
        for j in range(n):
            s = sum(q[i][t] * k[j][t] for t in range(d)) / math.sqrt(d)
            if mask is not None and not mask[j]:
                s += -1e9
            scores.append(s)
        top = max(scores)
        ex = [math.exp(s - top) for s in scores]
        tot = sum(ex)
        w = [e / tot for e in ex]
        out.append([sum(w[j] * v[j][c] for j in range(n)) for c in range(len(v[0]))])
    return np.array(out)


def brute_multi_head(x, params):
    heads = []
    for h in params.heads:
        heads.append(brute_attention((x @ h.wq).tolist(), (x @ h.wk).tolist(),
                                     (x @ h.wv).tolist()))
    concat = np.concatenate(heads, axis=1)
    d = params.wo.shape[1]
    return np.array([[sum(concat[i, t] * params.wo[t, j] for t in range(concat.shape[1]))
                      for j in range(d)] for i in range(concat.shape[0])])


class TestScaledDotProduct:
    def test_single_key_returns_value(self, rng):
        v = rng.normal(size=(1, 3))
        out = scaled_dot_product(rng.normal(size=(2, 4)), rng.normal(size=(1, 4)), v)
        np.testing.assert_array_equal(out, np.repeat(v, 2, axis=0))

    def test_identical_keys_average_values(self, rng):
        k = np.repeat(rng.normal(size=(1, 3)), 2, axis=0)
        v = rng.normal(size=(2, 5))
        out = scaled_dot_product(rng.normal(size=(1, 3)), k, v)
        np.testing.assert_allclose(out, v.mean(axis=0, keepdims=True), atol=1e-15)

    def test_worked_example(self):
        q, k, v = np.array([[1.0, 0]]), np.eye(2), np.eye(2)
        out = scaled_dot_product(q, k, v)
        w0 = 1 / (1 + math.exp(-1 / math.sqrt(2)))
        np.testing.assert_allclose(out, [[w0, 1 - w0]], atol=1e-15)
        np.testing.assert_allclose(out, [[0.6698, 0.3302]], atol=1e-4)

    def test_matches_brute_force_with_mask(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 5))
            q, k, v = rng.normal(size=(3, 4)), rng.normal(size=(n, 4)), rng.normal(size=(n, 2))
            mask = rng.random(n) > 0.3
            mask[int(rng.integers(n))] = True
            np.testing.assert_allclose(scaled_dot_product(q, k, v, mask),
                                       brute_attention(q.tolist(), k.tolist(), v.tolist(), mask),
                                       atol=1e-12)

    def test_weights_are_distributions(self, rng):
        mask = np.array([True, False, True, False])
        _, w = scaled_dot_product(rng.normal(size=(4, 3)), rng.normal(size=(4, 3)),
                                  rng.normal(size=(4, 3)), mask, return_weights=True)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(w[:, ~mask] < 1e-6)

    def test_row_equivariance(self, rng):
        x = rng.normal(size=(5, 4))
        perm = rng.permutation(5)
        np.testing.assert_allclose(scaled_dot_product(x, x, x)[perm],
                                   scaled_dot_product(x[perm], x[perm], x[perm]), atol=1e-12)

    def test_joint_scaling_keeps_argmax(self, rng):
        q, k, v = rng.normal(size=(4, 3)), rng.normal(size=(6, 3)), rng.normal(size=(6, 2))
        _, w = scaled_dot_product(q, k, v, return_weights=True)
        # q,k scaled by c multiplies scores by c^2; padding keys with zero columns
        # to width 3c^4 scales the denominator by c^2 as well
        c = 2.0
        pad = lambda a: np.hstack([c * a, np.zeros((len(a), 3 * int(c ** 4) - 3))])  # noqa: E731
        _, w2 = scaled_dot_product(pad(q), pad(k), v, return_weights=True)
        np.testing.assert_array_equal(w.argmax(axis=1), w2.argmax(axis=1))

    def test_errors(self, rng):
        with pytest.raises(ShapeError):
            scaled_dot_product(np.ones((1, 3)), np.ones((2, 4)), np.ones((2, 2)))
        with pytest.raises(ValueError, match="no valid"):
            scaled_dot_product(np.ones((1, 3)), np.ones((2, 3)), np.ones((2, 2)),
                               np.array([False, False]))


class TestMultiHead:
    def test_zero_input(self, rng):
        p = MultiHeadParams.init(8, 2, rng)
        np.testing.assert_array_equal(multi_head(np.zeros((3, 8)), p), np.zeros((3, 8)))

    def test_single_head_identity_reduces(self, rng):
        x = rng.normal(size=(3, 4))
        p = MultiHeadParams([AttentionHeadParams(np.eye(4), np.eye(4), np.eye(4))], np.eye(4))
        np.testing.assert_allclose(multi_head(x, p), scaled_dot_product(x, x, x), atol=1e-15)

    def test_matches_per_head_oracle(self, rng):
        x = rng.normal(size=(2, 4))
        p = MultiHeadParams.init(4, 2, rng)
        np.testing.assert_allclose(multi_head(x, p), brute_multi_head(x, p), atol=1e-12)

    def test_bad_head_count_at_construction(self, rng):
        with pytest.raises(ValueError):
            MultiHeadParams.init(6, 4, rng)
        with pytest.raises(ShapeError):
            MultiHeadParams([AttentionHeadParams(np.eye(4), np.eye(4), np.eye(4))] * 2,
                            np.eye(4))

    @pytest.mark.parametrize("masked", [False, True])
    def test_backward_all_groups(self, rng, masked):
        x = rng.normal(size=(4, 8))
        p = MultiHeadParams.init(8, 2, rng)
        w = rng.normal(size=(4, 8))
        mask = np.array([True, True, False, True]) if masked else None
        out, cache = multi_head(x, p, mask, return_cache=True)
        dx, grads = multi_head_backward(w, p, cache)
        f = lambda: float(np.sum(multi_head(x, p, mask) * w))  # noqa: E731
        assert relative_error(dx, numeric_gradient(f, x)) < 1e-5
        named = {"wo": p.wo}
        for i, h in enumerate(p.heads):
            named.update({f"wq.{i}": h.wq, f"wk.{i}": h.wk, f"wv.{i}": h.wv})
        for name, arr in named.items():
            assert relative_error(grads[name], numeric_gradient(f, arr)) < 1e-5, name
