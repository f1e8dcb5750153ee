import json
import math

import numpy as np
import pytest

from attnsent.bench import GruParams, LatencyReport, bench, format_table, gru_forward
from attnsent.tensor import ShapeError


def hand_gru(x, p):
    """Scalar-loop recurrence with math.exp/tanh."""
    u = p.units
    h = [0.0] * u
    sig = lambda v: 1 / (1 + math.exp(-v))  # noqa: E731
    for xt in x:
        def lin(w, uw, b, hh):
            return [sum(xt[i] * w[i][j] for i in range(len(xt)))
                    + sum(hh[k] * uw[k][j] for k in range(u)) + b[j] for j in range(u)]
        z = [sig(v) for v in lin(p.w_z, p.u_z, p.b_z, h)]
        r = [sig(v) for v in lin(p.w_r, p.u_r, p.b_r, h)]
        cand = [math.tanh(v) for v in lin(p.w_c, p.u_c, p.b_c, [ri * hi for ri, hi in zip(r, h)])]
        h = [zj * hj + (1 - zj) * cj for zj, hj, cj in zip(z, h, cand)]
    return np.array(h)


def test_zero_everything():
    p = GruParams(*(np.zeros(s) for s in [(3, 2)] * 3 + [(2, 2)] * 3 + [(2,)] * 3))
    np.testing.assert_array_equal(gru_forward(np.zeros((4, 3)), p), np.zeros(2))


def test_saturated_update_gate_carries_zero_state(rng):
    p = GruParams.init(3, 4, seed=1)
    p.b_z[:] = 1e3
    np.testing.assert_array_equal(gru_forward(rng.normal(size=(5, 3)), p), np.zeros(4))


def test_matches_hand_oracle(rng):
    p = GruParams.init(3, 2, seed=7)
    p.b_z[:], p.b_r[:], p.b_c[:] = rng.normal(size=(3, 2))
    x = rng.normal(size=(2, 3))
    np.testing.assert_allclose(gru_forward(x, p), hand_gru(x.tolist(), p), atol=1e-14)


def test_order_sensitive(rng):
    p = GruParams.init(4, 8, seed=2)
    x = rng.normal(size=(6, 4))
    assert np.linalg.norm(gru_forward(x, p) - gru_forward(x[::-1], p)) > 1e-8


def test_shape_errors():
    with pytest.raises(ShapeError):
        gru_forward(np.zeros((2, 5)), GruParams.init(3, 2))
    with pytest.raises(ShapeError):
        GruParams(*(np.zeros(s) for s in [(3, 2)] * 3 + [(2, 3)] * 3 + [(2,)] * 3))


def test_bench_counts_and_schema():
    calls = {"n": 0}

    def fn(doc):
        calls["n"] += 1

    reports = bench({"a": fn, "b": lambda d: sum(range(100))}, [1, 2, 3], reps=30, warmup=4)
    assert calls["n"] == 34  # warmup calls happen but are not in the statistics
    assert len(reports) == 2
    rec = json.loads(reports[0].to_json())
    assert set(rec) == {"model", "mean_s", "std_s", "min_s", "max_s", "reps", "warmup", "hardware"}
    assert rec["reps"] == 30 and rec["warmup"] == 4 and rec["mean_s"] > 0
    assert "1 thread" in rec["hardware"]
    table = format_table(reports)
    assert "Avg.inference time (s)" in table and len(table.splitlines()) == 4


def test_bench_rejects_bad_args():
    with pytest.raises(ValueError):
        bench({"a": len}, [], 30, 3)
    with pytest.raises(ValueError):
        bench({"a": len}, [1], 10, 3)
    with pytest.raises(ValueError):
        bench({"a": len}, [1], 30, 1)


def test_run_to_run_stability():
    p = GruParams.init(16, 32, seed=0)
    docs = [np.random.default_rng(i).normal(size=(16, 16)) for i in range(5)]
    a, b = (bench({"gru": lambda x: gru_forward(x, p)}, docs, 60, 5)[0] for _ in range(2))
    assert abs(a.mean_s - b.mean_s) <= 3 * max(a.std_s, b.std_s)


def test_latency_report_fields():
    r = LatencyReport("m", 1.0, 0.1, 0.9, 1.2, 30, 5, "hw")
    assert json.loads(r.to_json())["model"] == "m"
