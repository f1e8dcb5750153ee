"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--reps 20]

Each kernel runs on the same inputs under both backends. Hashes must match
exactly; float outputs must agree to rounding (summation order differs).
"""

import argparse
import timeit

import numpy as np

from attnsent import _pykernels
from attnsent.synthetic import FILLER, NEGATIVE, POSITIVE

try:
    from attnsent import _ckernels
except ImportError:
    _ckernels = None


def workloads(rng):
    words = list(FILLER + POSITIVE + NEGATIVE)
    tokens = [words[i] for i in rng.integers(0, len(words), 256)]
    blob = " ".join(tokens).encode("utf-8")
    weights = rng.normal(size=(20000, 96))
    idx = rng.integers(0, 20000, 64 * 12).astype(np.int64)
    offsets = np.arange(0, len(idx) + 1, 12, dtype=np.int64)
    dout = rng.normal(size=(64, 96))
    return {
        "fnv1a64 (2 KB)": lambda k: k.fnv1a64(blob),
        "ngram_buckets (256 tokens)": lambda k: [k.ngram_buckets(t, 3, 6, 2 ** 20) for t in tokens],
        "bag_mean (64 x 12 rows)": lambda k: k.bag_mean(weights, idx, offsets),
        "bag_mean_backward (64 x 12 rows)": lambda k: k.bag_mean_backward(dout, idx, offsets, 20000),
    }


def same(a, b):
    if isinstance(a, list):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray) and a.dtype.kind == "f":
        return np.allclose(a, b, rtol=0, atol=1e-12)
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    print(f"{'kernel':<34}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in workloads(np.random.default_rng(0)).items():
        if not same(fn(_pykernels), fn(_ckernels)):
            raise SystemExit(f"{name}: backends disagree")
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.reps))
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.reps))
        print(f"{name:<34}{py * 1e3:>12.3f}{cy * 1e3:>12.3f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
