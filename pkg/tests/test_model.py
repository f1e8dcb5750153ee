import numpy as np
import pytest

from attnsent.model import ModelConfig, SentimentModel
from attnsent.training import SGD, grad_check
from attnsent.losses import focal_loss
from attnsent.text import build_vocab

from conftest import tiny_model


def test_config_validation():
    assert ModelConfig().d_model == 768
    assert ModelConfig().d_model // ModelConfig().heads == 64
    with pytest.raises(ValueError):
        ModelConfig(d_emb=8, d_pe=8, heads=5)
    with pytest.raises(ValueError):
        ModelConfig(fusion="add", d_emb=8, d_pe=16, heads=4)
    with pytest.raises(ValueError):
        ModelConfig(n_classes=3)
    assert ModelConfig(fusion="add", d_emb=8, d_pe=8, heads=4).d_model == 8


def test_forward_is_distribution_and_deterministic():
    m = tiny_model()
    p1 = m.forward(["máy", "tốt"])
    p2 = m.forward(["máy", "tốt"])
    assert p1.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all((p1 > 0) & (p1 < 1))
    np.testing.assert_array_equal(p1, p2)
    np.testing.assert_array_equal(tiny_model().forward(["máy", "tốt"]), p1)


def test_empty_input_rejected():
    m = tiny_model()
    with pytest.raises(ValueError):
        m.forward([])
    with pytest.raises(ValueError):
        m.predict_proba("   ")


def test_oov_tokens_are_embeddable():
    m = tiny_model()
    p = m.forward(["zzqx", "chưa_thấy"])
    assert np.all(np.isfinite(p))


def test_permutation_invariance_without_positions(rng):
    tokens = ["máy", "chạy", "rất", "tốt", "nhé", "shop"]
    m = tiny_model(tokens)
    base = m.logits(tokens, zero_pe=True)
    for _ in range(5):
        perm = [tokens[i] for i in rng.permutation(6)]
        np.testing.assert_allclose(m.logits(perm, zero_pe=True), base, atol=1e-10)


def test_positions_break_permutation_invariance():
    tokens = ["máy", "chạy", "rất", "tốt", "nhé", "shop"]
    m = tiny_model(tokens)
    rev = tokens[::-1]
    assert np.abs(m.logits(rev) - m.logits(tokens)).max() > 1e-6


@pytest.mark.parametrize("overrides", [
    {},
    {"fusion": "add"},
    {"use_ffn": False},
    {"use_residual_norm": False},
    {"use_ffn": False, "use_residual_norm": False},
])
def test_gradients_every_assembly(overrides):
    cfg = ModelConfig(**{**dict(d_emb=8, d_pe=8, heads=4, buckets=4096, min_count=1), **overrides})
    report = grad_check(cfg)
    assert report.passed, report.errors
    assert report.max_error < 1e-4


def test_untouched_embedding_rows_get_no_gradient():
    m = tiny_model(("máy", "chạy", "rất", "tốt", "pin", "kém"))
    _, _, (rows, grads) = m.loss_and_grad(["máy", "tốt"], 1)
    dense = np.zeros_like(m.table.weights)
    dense[rows] = grads
    untouched = np.setdiff1d(np.arange(len(dense)), rows)
    assert m.table.vocab.get("kém") in untouched
    assert not dense[untouched].any()


def test_confident_correct_prediction_has_vanishing_gradients():
    m = tiny_model()
    m.params["cls.b"][...] = [[-40.0, 40.0]]
    loss, dense, (_, emb) = m.loss_and_grad(["máy", "tốt"], 1, gamma=2.0)
    assert loss == 0.0
    assert max(np.abs(g).max() for g in dense.values()) < 1e-12
    assert np.abs(emb).max() < 1e-12


def test_single_sgd_step_decreases_loss():
    m = tiny_model()
    tokens = ["máy", "chạy", "tốt"]
    before, dense, (rows, grads) = m.loss_and_grad(tokens, 0)
    SGD(m, lr=1e-4).step(dense, rows, grads)
    after = focal_loss(m.forward(tokens), 0)
    assert after < before


def test_truncation_invariance():
    m = tiny_model(max_len=5)
    a = ["máy", "chạy", "rất", "tốt", "nhé", "pin", "kém", "lắm"]
    b = a[:5] + ["zzz", "yyy"]
    np.testing.assert_array_equal(m.forward(a), m.forward(b))


def test_mask_ignores_padding():
    m = tiny_model()
    tokens = ["máy", "tốt"]
    padded = tokens + ["máy", "máy"]
    mask = np.array([True, True, False, False])
    # padding rows only ever appear behind the mask, but the block's
    # position-wise layers see them; the pooled output must not
    np.testing.assert_allclose(m.forward(padded, mask), m.forward(tokens), atol=1e-12)


def test_params_named_and_shape_checked():
    m = tiny_model()
    names = list(m.params)
    assert len(names) == len(set(names))
    assert "attn.wq.0" in names and "se.w_fc1" in names and "cls.w" in names
    bad = dict(m.params)
    bad.pop("cls.b")
    with pytest.raises(ValueError, match="does not match"):
        SentimentModel(m.config, m.table, bad)
