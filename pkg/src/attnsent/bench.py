"""Recurrent baseline and the inference-latency harness.

The GRU is forward-only with seeded random weights: latency depends on
shapes, not on trained values.
"""

from __future__ import annotations

import json
import os
import platform
import time
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import _kernels
from .tensor import ShapeError, sigmoid, softmax_rows
from .text import EmbeddingTable, Vocabulary


@dataclass
class GruParams:
    w_z: np.ndarray  # d x u input weights
    w_r: np.ndarray
    w_c: np.ndarray
    u_z: np.ndarray  # u x u recurrent weights
    u_r: np.ndarray
    u_c: np.ndarray
    b_z: np.ndarray  # u
    b_r: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        d, u = self.w_z.shape
        for name in ("w_r", "w_c"):
            if getattr(self, name).shape != (d, u):
                raise ShapeError(f"{name} must be {(d, u)}")
        for name in ("u_z", "u_r", "u_c"):
            if getattr(self, name).shape != (u, u):
                raise ShapeError(f"{name} must be {(u, u)}")
        for name in ("b_z", "b_r", "b_c"):
            if getattr(self, name).shape != (u,):
                raise ShapeError(f"{name} must be ({u},)")

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[0]

    @property
    def units(self) -> int:
        return self.w_z.shape[1]

    @classmethod
    def init(cls, d: int, u: int = 1024, seed: int = 0) -> "GruParams":
        rng = np.random.default_rng(seed)
        wi = lambda: rng.uniform(-1, 1, (d, u)) / np.sqrt(d)  # noqa: E731
        wu = lambda: rng.uniform(-1, 1, (u, u)) / np.sqrt(u)  # noqa: E731
        return cls(wi(), wi(), wi(), wu(), wu(), wu(), np.zeros(u), np.zeros(u), np.zeros(u))


def gru_forward(x: np.ndarray, p: GruParams) -> np.ndarray:
    """Final hidden state after reading the rows of ``x`` in order.

    ``h = z*h + (1-z)*h_cand``, so a saturated update gate carries the state.
    """
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != p.input_dim:
        raise ShapeError(f"gru_forward: input {x.shape}, expected (n>=1, {p.input_dim})")
    h = np.zeros(p.units)
    for xt in x:
        z = sigmoid(xt @ p.w_z + h @ p.u_z + p.b_z)
        r = sigmoid(xt @ p.w_r + h @ p.u_r + p.b_r)
        cand = np.tanh(xt @ p.w_c + (r * h) @ p.u_c + p.b_c)
        h = z * h + (1.0 - z) * cand
    return h


class GruClassifier:
    """Subword embeddings, one GRU layer over the sequence, softmax head."""

    def __init__(self, vocab: Vocabulary, input_dim: int, units: int = 1024,
                 buckets: int = 2 ** 20, seed: int = 0):
        self.table = EmbeddingTable(vocab, input_dim, buckets, seed=seed)
        self.gru = GruParams.init(input_dim, units, seed)
        rng = np.random.default_rng([seed, 2])
        self.w_out = rng.uniform(-1, 1, (units, 2)) / np.sqrt(units)

    def forward(self, tokens) -> np.ndarray:
        x, _ = self.table.lookup(tokens)
        h = gru_forward(x, self.gru)
        return softmax_rows((h @ self.w_out)[None, :])[0]


@dataclass
class LatencyReport:
    model: str
    mean_s: float
    std_s: float
    min_s: float
    max_s: float
    reps: int
    warmup: int
    hardware: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def hardware_descriptor(threads: int = 1) -> str:
    return (f"{platform.machine()} {platform.processor() or 'cpu'}; "
            f"{os.cpu_count()} logical cpus; {threads} thread(s); "
            f"kernels={_kernels.BACKEND}; python {platform.python_version()}")


def bench(models: Mapping[str, Callable], docs: Sequence, reps: int = 100,
          warmup: int = 5, threads: int = 1) -> list[LatencyReport]:
    """Time one forward call per document for every model.

    Warmup calls are made first and never enter the statistics. BLAS is
    held to ``threads`` threads for the whole measurement.
    """
    if not docs:
        raise ValueError("no documents to benchmark")
    if reps < 30 or warmup < 3:
        raise ValueError("need reps >= 30 and warmup >= 3")
    reports = []
    hw = hardware_descriptor(threads)
    with threadpool_limits(limits=threads):
        for name, fn in models.items():
            for i in range(warmup):
                fn(docs[i % len(docs)])
            times = np.empty(reps)
            for i in range(reps):
                doc = docs[i % len(docs)]
                t0 = time.perf_counter()
                fn(doc)
                times[i] = time.perf_counter() - t0
            reports.append(LatencyReport(
                name, float(times.mean()), float(times.std(ddof=1)), float(times.min()),
                float(times.max()), reps, warmup, hw))
    return reports


def format_table(reports: Sequence[LatencyReport]) -> str:
    """Plain-text table in the shape of a methods / latency comparison."""
    width = max(len("Methods"), *(len(r.model) for r in reports))
    lines = [f"{'Methods':<{width}} | Avg.inference time (s) | Std (s)",
             "-" * (width + 36)]
    for r in reports:
        lines.append(f"{r.model:<{width}} | {r.mean_s:>22.6f} | {r.std_s:.6f}")
    return "\n".join(lines)
