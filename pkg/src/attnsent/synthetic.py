"""Seeded synthetic review corpora for tests, demos and the acceptance run."""

from __future__ import annotations

import numpy as np

from .text import Document

POSITIVE = ["tốt", "đẹp", "nhanh", "bền", "mượt", "tuyệt", "ổn", "rẻ", "thích", "xịn"]
NEGATIVE = ["tệ", "xấu", "chậm", "lỗi", "đơ", "nóng", "hỏng", "đắt", "chán", "kém"]
NEGATION = "không"
FILLER = [
    "máy", "điện", "thoại", "pin", "màn", "hình", "camera", "giao", "hàng", "shop",
    "mình", "mua", "dùng", "được", "tuần", "này", "cho", "em", "hỏi", "giá", "sản",
    "phẩm", "với", "thì", "là", "có", "của", "rất", "khá", "hơi", "lắm", "nhé",
]


def keyword_corpus(n_docs: int = 2000, seed: int = 0, negation_rate: float = 0.1,
                   min_len: int = 4, max_len: int = 12) -> list[Document]:
    """Balanced documents whose label is set by one sentiment keyword.

    A fraction ``negation_rate`` of documents put the negation word right
    before the keyword, which flips the label.
    """
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n_docs):
        positive = i % 2 == 0
        n = int(rng.integers(min_len, max_len + 1))
        words = [FILLER[j] for j in rng.integers(0, len(FILLER), n)]
        negate = rng.random() < negation_rate
        lexicon = POSITIVE if positive != negate else NEGATIVE
        keyword = lexicon[int(rng.integers(0, len(lexicon)))]
        at = int(rng.integers(0, n + 1))
        words[at:at] = [NEGATION, keyword] if negate else [keyword]
        docs.append(Document(" ".join(words), "pos" if positive else "neg"))
    order = rng.permutation(n_docs)
    return [docs[i] for i in order]


def imbalanced_corpus(n_pos: int, n_neg: int, seed: int = 0,
                      max_sentences: int = 4) -> list[Document]:
    """Multi-sentence documents with a chosen class imbalance."""
    rng = np.random.default_rng(seed)
    docs = []
    for label, count, lex in (("pos", n_pos, POSITIVE), ("neg", n_neg, NEGATIVE)):
        for _ in range(count):
            sentences = []
            for _ in range(int(rng.integers(1, max_sentences + 1))):
                words = [FILLER[j] for j in rng.integers(0, len(FILLER), 4)]
                words.append(lex[int(rng.integers(0, len(lex)))])
                sentences.append(" ".join(words) + ".")
            docs.append(Document(" ".join(sentences), label))
    return docs
