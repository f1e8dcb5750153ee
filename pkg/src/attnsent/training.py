"""Training loop, corpus balancing and splitting, metrics, gradient checks."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .losses import focal_loss, focal_loss_grad_logits
from .model import ModelConfig, SentimentModel
from .tensor import NonFiniteError
from .text import LABELS, Document, build_vocab, split_sentences, tokenize

__all__ = [
    "TrainConfig", "EvalReport", "TrainResult", "TrainingDiverged", "Adam", "SGD",
    "focal_loss", "focal_loss_grad_logits", "balance_corpus", "split", "fit", "train",
    "evaluate", "classification_report", "grad_check", "numeric_gradient",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    gamma: float = 2.0
    alpha: tuple[float, float] = (1.0, 1.0)
    seed: int = 0
    split: tuple[float, float, float] = (0.64, 0.16, 0.20)

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1) > 1e-9:
            raise ValueError(f"split ratios must be three non-negatives summing to 1: {self.split}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"], d["split"] = list(self.alpha), list(self.split)
        return d


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch = epoch, batch


# -- optimizers --------------------------------------------------------------


class SGD:
    def __init__(self, model: SentimentModel, lr: float = 1e-2):
        self.model, self.lr = model, lr

    def step(self, dense: dict, emb_rows: np.ndarray, emb_grads: np.ndarray) -> None:
        for name, g in dense.items():
            self.model.params[name] -= self.lr * g
        if len(emb_rows):
            self.model.table.weights[emb_rows] -= self.lr * emb_grads


class Adam:
    """Adam on dense arrays; embedding rows are updated lazily, only when touched."""

    def __init__(self, model: SentimentModel, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.model, self.lr, self.b1, self.b2, self.eps = model, lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in model.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in model.params.items()}
        self.m_emb = np.zeros_like(model.table.weights)
        self.v_emb = np.zeros_like(model.table.weights)

    def _update(self, param, m, v, g, lr_t):
        m *= self.b1
        m += (1 - self.b1) * g
        v *= self.b2
        v += (1 - self.b2) * g * g
        param -= lr_t * m / (np.sqrt(v) + self.eps)

    def step(self, dense: dict, emb_rows: np.ndarray, emb_grads: np.ndarray) -> None:
        self.t += 1
        lr_t = self.lr * math.sqrt(1 - self.b2 ** self.t) / (1 - self.b1 ** self.t)
        for name, g in dense.items():
            self._update(self.model.params[name], self.m[name], self.v[name], g, lr_t)
        if len(emb_rows):
            w = self.model.table.weights
            m, v = self.m_emb[emb_rows], self.v_emb[emb_rows]
            p = w[emb_rows]
            self._update(p, m, v, emb_grads, lr_t)
            w[emb_rows], self.m_emb[emb_rows], self.v_emb[emb_rows] = p, m, v


# -- corpus handling ---------------------------------------------------------


def _label_counts(docs: Sequence[Document]) -> dict[str, int]:
    counts = {lab: 0 for lab in LABELS}
    for d in docs:
        if d.label is None:
            raise ValueError("all documents need a label")
        counts[d.label] += 1
    return counts


def balance_corpus(docs: Sequence[Document], length_threshold: int = 2,
                   low: float = 0.9, high: float = 1.1) -> list[Document]:
    """Grow the minority class by segmenting and duplicating its documents.

    Minority documents with two or more sentences are split into one
    document per sentence; minority documents with fewer than
    ``length_threshold`` sentences are duplicated. Rounds repeat until the
    minority count reaches the majority count or nothing applies. A
    corpus whose class ratio is already within ``[low, high]`` is returned
    unchanged. Majority documents are never touched.
    """
    counts = _label_counts(docs)
    if min(counts.values()) == 0:
        raise ValueError(f"balancing needs both classes, got {counts}")
    docs = list(docs)
    minority = min(LABELS, key=lambda lab: (counts[lab], lab))
    major = counts[LABELS[1 - LABELS.index(minority)]]
    if low <= counts[minority] / major <= high:
        return docs
    cap = math.floor(high * major)
    n_min = counts[minority]

    changed = True
    while changed and n_min < major:
        changed = False
        out = []
        for doc in docs:
            if doc.label == minority and n_min < major:
                parts = split_sentences(doc.text)
                if len(parts) >= 2 and n_min + len(parts) - 1 <= cap:
                    out.extend(Document(p, minority) for p in parts)
                    n_min += len(parts) - 1
                    changed = True
                    continue
            out.append(doc)
        docs = out
        extra = []
        for doc in docs:
            if n_min >= major:
                break
            if doc.label == minority and len(split_sentences(doc.text)) < length_threshold:
                extra.append(Document(doc.text, minority))
                n_min += 1
        if extra:
            docs.extend(extra)
            changed = True
    return docs


def split(docs: Sequence[Document], ratios=(0.64, 0.16, 0.20), seed: int = 0):
    """Stratified, seeded three-way split into (train, val, test)."""
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1) > 1e-9:
        raise ValueError(f"invalid split ratios {ratios}")
    rng = np.random.default_rng(seed)
    parts: list[list[Document]] = [[], [], []]
    for lab in LABELS:
        group = [d for d in docs if d.label == lab]
        if any(d.label is None for d in docs):
            raise ValueError("all documents need a label")
        order = rng.permutation(len(group))
        exact = np.array(ratios) * len(group)
        sizes = np.floor(exact).astype(int)
        # largest remainder keeps every class within one document of its share
        for i in np.argsort(-(exact - sizes), kind="stable")[: len(group) - sizes.sum()]:
            sizes[i] += 1
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        for k in range(3):
            parts[k].extend(group[j] for j in order[bounds[k]:bounds[k + 1]])
    for k, name in enumerate(("train", "validation", "test")):
        if ratios[k] > 0 and not parts[k]:
            raise ValueError(f"{name} split received no documents")
    return tuple(parts)


# -- metrics -------------------------------------------------------------------


@dataclass
class EvalReport:
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    macro_f1: float
    confusion: list[list[int]]   # rows = true class, columns = predicted
    latency_mean_s: float = 0.0
    latency_std_s: float = 0.0
    latency_samples: int = 0
    mean_loss: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))


def classification_report(y_true: Sequence[int], y_pred: Sequence[int]) -> EvalReport:
    if len(y_true) == 0:
        raise ValueError("cannot evaluate an empty corpus")
    cm = np.zeros((2, 2), dtype=int)
    for t, p in zip(y_true, y_pred):
        cm[t, p] += 1
    prec, rec, f1 = [], [], []
    for c in range(2):
        tp = cm[c, c]
        p = tp / cm[:, c].sum() if cm[:, c].sum() else 0.0
        r = tp / cm[c, :].sum() if cm[c, :].sum() else 0.0
        prec.append(float(p))
        rec.append(float(r))
        f1.append(float(2 * p * r / (p + r)) if p + r else 0.0)
    return EvalReport(
        accuracy=float(np.trace(cm) / cm.sum()), precision=prec, recall=rec, f1=f1,
        macro_f1=float(np.mean(f1)), confusion=cm.tolist(),
    )


def evaluate(model: SentimentModel, docs: Sequence[Document], *, gamma: float = 2.0,
             warmup: int = 3, min_timed: int = 30, timed: bool = True) -> EvalReport:
    """Accuracy/F1 over ``docs`` plus per-document inference latency."""
    if not docs:
        raise ValueError("cannot evaluate an empty corpus")
    y_true, y_pred, losses = [], [], []
    for doc in docs:
        probs = model.predict_proba(doc.text)
        y_true.append(doc.target)
        y_pred.append(int(np.argmax(probs)))
        losses.append(focal_loss(probs, doc.target, gamma))
    report = classification_report(y_true, y_pred)
    report.mean_loss = float(np.mean(losses))
    if timed:
        times = time_documents(model.predict_proba, [d.text for d in docs], warmup, min_timed)
        report.latency_mean_s = float(np.mean(times))
        report.latency_std_s = float(np.std(times, ddof=1))
        report.latency_samples = len(times)
    return report


def time_documents(fn: Callable, items: Sequence, warmup: int, min_timed: int) -> list[float]:
    """Per-item wall time of ``fn``; cycles through ``items`` to reach ``min_timed``."""
    for i in range(warmup):
        fn(items[i % len(items)])
    times = []
    for i in range(max(len(items), min_timed)):
        item = items[i % len(items)]
        t0 = time.perf_counter()
        fn(item)
        times.append(time.perf_counter() - t0)
    return times


# -- training ------------------------------------------------------------------


@dataclass
class TrainResult:
    model: SentimentModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    splits: tuple = ()


def _snapshot(model: SentimentModel):
    return copy.deepcopy(model.params), model.table.weights.copy()


def _restore(model: SentimentModel, snap) -> None:
    params, weights = snap
    for k, v in params.items():
        model.params[k][...] = v
    model.table.weights[...] = weights


def fit(model: SentimentModel, train_docs: Sequence[Document],
        val_docs: Sequence[Document], config: TrainConfig,
        on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Mini-batch training with best-validation-macro-F1 checkpointing.

    Gradients inside a batch are summed in document order, so runs are
    reproducible for a given seed.
    """
    if not train_docs:
        raise ValueError("no training documents")
    bags = [model.bag(tokenize(d.text), grow=True) for d in train_docs]
    targets = [d.target for d in train_docs]
    opt = Adam(model, config.lr, config.beta1, config.beta2, config.adam_eps)
    history, best, best_f1, best_epoch = [], None, -1.0, 0

    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(bags))
        total = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start:start + config.batch_size]
            dense_sum, rows_all, grads_all, batch_loss = None, [], [], 0.0
            for i in batch:
                loss, dense, (rows, grads) = model.loss_and_grad(
                    bags[i], targets[i], config.gamma, config.alpha)
                batch_loss += loss
                if dense_sum is None:
                    dense_sum = dense
                else:
                    for k, g in dense.items():
                        dense_sum[k] += g
                rows_all.append(rows)
                grads_all.append(grads)
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(epoch, b, batch_loss)
            total += batch_loss
            scale = 1.0 / len(batch)
            uniq, inv = np.unique(np.concatenate(rows_all), return_inverse=True)
            emb = np.zeros((len(uniq), model.table.dim))
            np.add.at(emb, inv, np.concatenate(grads_all))
            opt.step({k: g * scale for k, g in dense_sum.items()}, uniq, emb * scale)

        record = {"epoch": epoch, "train_loss": float(total / len(bags))}
        if val_docs:
            rep = evaluate(model, val_docs, gamma=config.gamma, timed=False)
            record.update(val_loss=rep.mean_loss, val_macro_f1=rep.macro_f1)
            if rep.macro_f1 > best_f1:
                best_f1, best_epoch, best = rep.macro_f1, epoch, _snapshot(model)
        history.append(record)
        log.info("epoch %d: %s", epoch, record)
        if on_epoch:
            on_epoch(record)
    if best is not None:
        _restore(model, best)
    else:
        best_epoch = config.epochs
    return TrainResult(model, history, best_epoch)


def train(docs: Sequence[Document], model_config: ModelConfig, config: TrainConfig,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Split, build the vocabulary on the training part, and fit."""
    train_docs, val_docs, test_docs = split(docs, config.split, config.seed)
    token_lists = [tokenize(d.text) for d in train_docs]
    vocab = build_vocab(token_lists, model_config.min_count)
    model = SentimentModel.build(model_config, vocab, token_lists)
    result = fit(model, train_docs, val_docs, config, on_epoch)
    result.splits = (train_docs, val_docs, test_docs)
    return result


# -- gradient checking ---------------------------------------------------------


def numeric_gradient(f: Callable[[], float], arr: np.ndarray, eps: float = 1e-5,
                     index: Iterable | None = None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``arr`` (perturbed in place)."""
    if not eps > 0:
        raise ValueError("finite-difference step must be > 0")
    grad = np.zeros_like(arr)
    for idx in (index if index is not None else np.ndindex(arr.shape)):
        old = arr[idx]
        arr[idx] = old + eps
        up = f()
        arr[idx] = old - eps
        down = f()
        arr[idx] = old
        grad[idx] = (up - down) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise deviation, scaled by the larger gradient magnitude in the group."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float
    eps: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def to_json(self) -> str:
        return json.dumps({"errors": self.errors, "max_error": self.max_error,
                           "tolerance": self.tolerance, "eps": self.eps,
                           "passed": self.passed}, sort_keys=True)


def grad_check(model_config: ModelConfig | None = None, eps: float = 1e-5,
               tolerance: float = 1e-4, tokens: Sequence[str] = ("máy", "chạy", "tốt"),
               target: int = 1, gamma: float = 2.0) -> GradCheckReport:
    """Compare analytic and central-difference gradients for every parameter group."""
    if not eps > 0:
        raise ValueError("finite-difference step must be > 0")
    cfg = model_config or ModelConfig(d_emb=8, d_pe=8, heads=4, buckets=4096, min_count=1)
    if cfg.d_model > 16 or len(tokens) > 4:
        raise ValueError("grad_check is meant for tiny instances (d_model <= 16, n <= 4)")
    model = SentimentModel.build(cfg, build_vocab([tokens], 1), [tokens])
    bag = model.bag(list(tokens))
    _, dense, (rows, emb_grads) = model.loss_and_grad(bag, target, gamma)

    def loss():
        return focal_loss(model.forward(bag), target, gamma)

    errors = {}
    for name, arr in model.params.items():
        if not np.all(np.isfinite(dense[name])):
            raise NonFiniteError(f"non-finite analytic gradient for {name}")
        errors[name] = relative_error(dense[name], numeric_gradient(loss, arr, eps))
    w = model.table.weights
    num = numeric_gradient(loss, w, eps,
                           index=[(r, j) for r in rows for j in range(w.shape[1])])[rows]
    if not np.all(np.isfinite(emb_grads)):
        raise NonFiniteError("non-finite analytic gradient for emb.weights")
    errors["emb.weights"] = relative_error(emb_grads, num)
    return GradCheckReport(errors, tolerance, eps)
