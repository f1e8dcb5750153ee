"""Normalization, tokenization, vocabulary and subword embeddings.

Tokens are embedded fastText-style: the mean of the word vector (when the
word is in the vocabulary) and the vectors of its hashed character n-grams,
so every string, including unseen ones, gets a vector.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

log = logging.getLogger(__name__)

URL_TOKEN = "urlObj"
PHONE_TOKEN = "phonenumObj"
MAIL_TOKEN = "mailObj"

LABELS = ("neg", "pos")  # class index 0 = negative, 1 = positive

EMAIL_RE = re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+")
URL_RE = re.compile(r"(?:https?://|www\.)\S+?(?=[.,!?;:)\]}'\"]*(?:\s|$))", re.IGNORECASE)
# Vietnamese numbers: 9-11 digits, optional +84 prefix, '.'/'-' separators allowed
PHONE_RE = re.compile(r"(?<![\w+])(?:\+84[ .-]?)?\d(?:[.-]?\d){8,10}(?![\w])")
TOKEN_RE = re.compile(r"(?:\w|[\u0300-\u036f])+|[^\w\s]")
SENTENCE_RE = re.compile(r"(?<=[.!?])\s+|\n+")


def normalize(text: str) -> str:
    """NFC, replace emails/URLs/phone numbers with placeholders, collapse spaces.

    Casing is kept as is.
    """
    text = unicodedata.normalize("NFC", text)
    text = EMAIL_RE.sub(MAIL_TOKEN, text)
    text = URL_RE.sub(URL_TOKEN, text)
    text = PHONE_RE.sub(PHONE_TOKEN, text)
    return " ".join(text.split())


def tokenize(text: str) -> list[str]:
    """Split on whitespace and detach punctuation.

    Underscore-joined words (pre-segmented input) stay a single token.
    """
    return TOKEN_RE.findall(text)


def split_sentences(text: str) -> list[str]:
    parts = [p.strip() for p in SENTENCE_RE.split(text)]
    return [p for p in parts if p]


@dataclass(frozen=True)
class Document:
    text: str
    label: str | None = None

    def __post_init__(self):
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")

    @property
    def target(self) -> int:
        if self.label is None:
            raise ValueError("document has no label")
        return LABELS.index(self.label)


class CorpusFormatError(ValueError):
    pass


def read_corpus(path: str | Path) -> list[Document]:
    """Read line-delimited JSON ``{"text": ..., "label": "pos"|"neg"}``."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                docs.append(Document(rec["text"], rec.get("label")))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
    return docs


def write_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            rec = {"text": doc.text}
            if doc.label is not None:
                rec["label"] = doc.label
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def prepare_documents(docs: Iterable[Document]) -> tuple[list[Document], int]:
    """Normalize every document; returns kept documents and the dropped count."""
    kept, dropped = [], 0
    for doc in docs:
        text = normalize(doc.text)
        if not tokenize(text):
            dropped += 1
            continue
        kept.append(Document(text, doc.label))
    if dropped:
        log.info("dropped %d documents empty after normalization", dropped)
    return kept, dropped


class Vocabulary:
    def __init__(self, words: Sequence[str], counts: Sequence[int] | None = None,
                 min_count: int = 5):
        self.words = list(words)
        self.counts = list(counts) if counts is not None else [0] * len(self.words)
        self.min_count = min_count
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def get(self, word: str) -> int | None:
        return self.index.get(word)


def build_vocab(token_lists: Iterable[Sequence[str]], min_count: int = 5) -> Vocabulary:
    """Keep words seen at least ``min_count`` times; ids by (count desc, word)."""
    counts = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    kept = sorted(((w, c) for w, c in counts.items() if c >= min_count),
                  key=lambda wc: (-wc[1], wc[0]))
    if not kept:
        raise ValueError(f"no word occurs at least {min_count} times")
    log.info("vocabulary: %d of %d distinct words kept (min_count=%d)",
             len(kept), len(counts), min_count)
    return Vocabulary([w for w, _ in kept], [c for _, c in kept], min_count)


@dataclass
class TokenBag:
    """Flattened row ids per token, remapped onto the distinct rows used."""
    rows: np.ndarray      # distinct table rows (negative = unmaterialized bucket)
    inverse: np.ndarray   # position of each flattened id within ``rows``
    offsets: np.ndarray   # bag boundaries into ``inverse``


class EmbeddingTable:
    """Word vectors plus lazily materialized n-gram bucket vectors.

    Rows ``0..len(vocab)-1`` hold words; bucket vectors get a row the first
    time they are seen with ``grow=True``. A bucket that was never
    materialized still has a well-defined vector: its deterministic
    initialization, computed on the fly.
    """

    def __init__(self, vocab: Vocabulary, dim: int = 384, buckets: int = 2 ** 20,
                 minn: int = 3, maxn: int = 6, seed: int = 0,
                 weights: np.ndarray | None = None, bucket_ids: Sequence[int] = ()):
        if dim < 1 or buckets < 1 or not 1 <= minn <= maxn:
            raise ValueError("invalid embedding table configuration")
        self.vocab = vocab
        self.dim = dim
        self.buckets = buckets
        self.minn = minn
        self.maxn = maxn
        self.seed = seed
        self.bucket_slot = {int(b): len(vocab) + i for i, b in enumerate(bucket_ids)}
        if weights is None:
            rng = np.random.default_rng([seed, 0])
            weights = self._uniform(rng, (len(vocab), dim))
            if len(bucket_ids):
                weights = np.vstack([weights] + [self._bucket_init(b) for b in bucket_ids])
        expected = (len(vocab) + len(self.bucket_slot), dim)
        if weights.shape != expected:
            raise ValueError(f"embedding weights {weights.shape}, expected {expected}")
        self.weights = np.asarray(weights, dtype=np.float64)
        self._ngram_cache: dict[str, np.ndarray] = {}

    def _uniform(self, rng, shape):
        bound = 1.0 / np.sqrt(self.dim)
        return rng.uniform(-bound, bound, shape)

    def _bucket_init(self, bucket: int) -> np.ndarray:
        return self._uniform(np.random.default_rng([self.seed, 1, int(bucket)]), (1, self.dim))

    def ngrams(self, token: str) -> np.ndarray:
        ids = self._ngram_cache.get(token)
        if ids is None:
            ids = _kernels.ngram_buckets(token, self.minn, self.maxn, self.buckets)
            self._ngram_cache[token] = ids
        return ids

    def token_rows(self, token: str, grow: bool = False) -> list[int]:
        """Row ids composing ``token``; ``-(bucket+1)`` marks an unmaterialized bucket."""
        rows = []
        wid = self.vocab.get(token)
        if wid is not None:
            rows.append(wid)
        for b in self.ngrams(token).tolist():
            slot = self.bucket_slot.get(b)
            if slot is None and grow:
                slot = self._materialize(b)
            rows.append(slot if slot is not None else -(b + 1))
        return rows

    def _materialize(self, bucket: int) -> int:
        slot = self.weights.shape[0]
        self.weights = np.vstack([self.weights, self._bucket_init(bucket)])
        self.bucket_slot[bucket] = slot
        return slot

    def grow(self, token_lists: Iterable[Sequence[str]]) -> None:
        """Materialize every bucket reachable from ``token_lists`` in one pass."""
        new = []
        seen = set(self.bucket_slot)
        for tokens in token_lists:
            for tok in tokens:
                for b in self.ngrams(tok).tolist():
                    if b not in seen:
                        seen.add(b)
                        new.append(b)
        if new:
            base = self.weights.shape[0]
            self.weights = np.vstack([self.weights] + [self._bucket_init(b) for b in new])
            for i, b in enumerate(new):
                self.bucket_slot[b] = base + i

    @property
    def bucket_ids(self) -> np.ndarray:
        ids = np.empty(len(self.bucket_slot), dtype=np.int64)
        for b, slot in self.bucket_slot.items():
            ids[slot - len(self.vocab)] = b
        return ids

    def bag(self, tokens: Sequence[str], grow: bool = False) -> TokenBag:
        flat, offsets = [], [0]
        for tok in tokens:
            rows = self.token_rows(tok, grow)
            if not rows:  # unreachable with minn >= 1, kept as a guard
                raise ValueError(f"token {tok!r} has no subword rows")
            flat.extend(rows)
            offsets.append(len(flat))
        rows, inverse = np.unique(np.array(flat, dtype=np.int64), return_inverse=True)
        return TokenBag(rows, inverse.astype(np.int64), np.array(offsets, dtype=np.int64))

    def gather(self, rows: np.ndarray) -> np.ndarray:
        out = np.empty((len(rows), self.dim))
        real = rows >= 0
        out[real] = self.weights[rows[real]]
        for i in np.flatnonzero(~real):
            out[i] = self._bucket_init(-int(rows[i]) - 1)
        return out

    def lookup(self, tokens: Sequence[str], grow: bool = False):
        """Embed a token sequence; returns ``(n x dim matrix, bag)``."""
        bag = self.bag(tokens, grow)
        return _kernels.bag_mean(self.gather(bag.rows), bag.inverse, bag.offsets), bag

    def lookup_backward(self, dout: np.ndarray, bag: TokenBag) -> tuple[np.ndarray, np.ndarray]:
        """Gradient w.r.t. the rows in ``bag.rows``: returns ``(rows, grads)``."""
        grads = _kernels.bag_mean_backward(dout, bag.inverse, bag.offsets, len(bag.rows))
        return bag.rows, grads

    def embed_token(self, token: str) -> np.ndarray:
        return self.lookup([token])[0][0]
