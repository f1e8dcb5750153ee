import numpy as np
import pytest

from attnsent.model import ModelConfig, SentimentModel
from attnsent.synthetic import keyword_corpus
from attnsent.text import build_vocab
from attnsent.training import TrainConfig, train


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_model(tokens=("máy", "chạy", "rất", "tốt"), **overrides):
    cfg = dict(d_emb=8, d_pe=8, heads=4, buckets=4096, min_count=1)
    cfg.update(overrides)
    config = ModelConfig(**cfg)
    return SentimentModel.build(config, build_vocab([list(tokens)], 1), [list(tokens)])


@pytest.fixture(scope="session")
def trained_small():
    """A small model fitted on the synthetic keyword corpus (a few seconds)."""
    docs = keyword_corpus(600, seed=3)
    mc = ModelConfig(d_emb=16, d_pe=16, heads=4, buckets=2 ** 14, min_count=2, seed=3)
    return train(docs, mc, TrainConfig(epochs=8, seed=3))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
