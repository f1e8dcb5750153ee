"""Command-line entry point: ``attnsent {prepare,train,eval,predict,bench,gradcheck}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
The fully resolved configuration is echoed to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .model import ModelConfig, SentimentModel
from .serialize import ModelFormatError, load, save
from .tensor import NonFiniteError
from .text import Document, LABELS, CorpusFormatError, prepare_documents, read_corpus, write_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("attnsent")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _coerce(value: str, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(float(v) for v in value.split(","))
    if default is None:
        return int(value)
    return value


def read_config_file(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip("\"'")
    return out


MODEL_FLAGS = {"fusion": "fusion", "heads": "heads", "d_emb": "d_emb", "d_pe": "d_pe",
               "buckets": "buckets", "min_count": "min_count", "max_len": "max_len"}
TRAIN_FLAGS = {"epochs": "epochs", "batch_size": "batch_size", "gamma": "gamma", "lr": "lr"}


def resolve_configs(args, model_defaults: ModelConfig | None = None):
    """defaults < config file < flags."""
    from .training import TrainConfig

    mc, tc = model_defaults or ModelConfig(), TrainConfig()
    file_vals = read_config_file(args.config) if getattr(args, "config", None) else {}
    m_fields = {f.name for f in fields(ModelConfig)}
    t_fields = {f.name for f in fields(TrainConfig)}
    unknown = set(file_vals) - m_fields - t_fields
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    try:
        m_over = {k: _coerce(v, getattr(mc, k)) for k, v in file_vals.items() if k in m_fields}
        t_over = {k: _coerce(v, getattr(tc, k)) for k, v in file_vals.items()
                  if k in t_fields and k not in m_fields}
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from exc
    for flag, key in MODEL_FLAGS.items():
        if getattr(args, flag, None) is not None:
            m_over[key] = getattr(args, flag)
    for flag, key in TRAIN_FLAGS.items():
        if getattr(args, flag, None) is not None:
            t_over[key] = getattr(args, flag)
    if getattr(args, "seed", None) is not None:
        m_over["seed"] = t_over["seed"] = args.seed
    try:
        return replace(mc, **m_over), replace(tc, **t_over)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _echo(subcommand: str, **resolved) -> None:
    print(json.dumps({"subcommand": subcommand, **resolved}, sort_keys=True,
                     ensure_ascii=False), file=sys.stderr)


def _read(path) -> list[Document]:
    if path is None:
        raise UsageError("--corpus is required")
    try:
        return read_corpus(path)
    except FileNotFoundError as exc:
        raise DataError(f"corpus not found: {path}") from exc
    except CorpusFormatError as exc:
        raise DataError(str(exc)) from exc


def _load_model(path) -> SentimentModel:
    if path is None:
        raise UsageError("--model is required")
    try:
        return load(path)
    except FileNotFoundError as exc:
        raise DataError(f"model not found: {path}") from exc
    except ModelFormatError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _counts(docs) -> dict[str, int]:
    return {lab: sum(d.label == lab for d in docs) for lab in LABELS}


# -- subcommands -------------------------------------------------------------


def cmd_prepare(args) -> int:
    from .training import balance_corpus

    if args.out is None:
        raise UsageError("--out is required")
    docs = _read(args.corpus)
    _echo("prepare", corpus=args.corpus, out=args.out, length_threshold=args.length_threshold)
    kept, dropped = prepare_documents(docs)
    if any(d.label is None for d in kept):
        raise DataError("prepare needs labelled documents")
    try:
        balanced = balance_corpus(kept, args.length_threshold)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    write_corpus(balanced, args.out)
    print(json.dumps({"dropped": dropped, "before": _counts(kept),
                      "after": _counts(balanced)}, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import evaluate, train

    if args.out is None:
        raise UsageError("--out is required")
    mc, tc = resolve_configs(args)
    docs = _read(args.corpus)
    _echo("train", corpus=args.corpus, out=args.out, model=mc.to_dict(), train=tc.to_dict())
    kept, _ = prepare_documents(docs)
    if any(d.label is None for d in kept):
        raise DataError("training needs labelled documents")
    emit = lambda rec: print(json.dumps(rec, sort_keys=True), flush=True)  # noqa: E731
    try:
        result = train(kept, mc, tc, on_epoch=emit)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    save(result.model, args.out)
    if args.report:
        test = result.splits[2]
        report = evaluate(result.model, test, gamma=tc.gamma) if test else None
        Path(args.report).write_text(json.dumps(
            {"best_epoch": result.best_epoch,
             "test": json.loads(report.to_json()) if report else None}, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .training import evaluate

    model = _load_model(args.model)
    docs = _read(args.corpus)
    _echo("eval", corpus=args.corpus, model=args.model, config=model.config.to_dict())
    kept, _ = prepare_documents(docs)
    if not kept or any(d.label is None for d in kept):
        raise DataError("eval needs a nonempty labelled corpus")
    print(evaluate(model, kept).to_json())
    return EXIT_OK


def _prediction(model: SentimentModel, text: str) -> str:
    try:
        p = model.predict_proba(text)
    except ValueError as exc:
        return json.dumps({"error": str(exc)})
    return json.dumps({"label": LABELS[int(np.argmax(p))], "p_neg": float(p[0]),
                       "p_pos": float(p[1])})


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    _echo("predict", model=args.model, config=model.config.to_dict())
    if args.text is not None:
        print(_prediction(model, args.text))
        return EXIT_OK
    for line in sys.stdin:
        if line.strip():
            print(_prediction(model, line.rstrip("\n")), flush=True)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import GruClassifier, bench, format_table
    from .synthetic import FILLER
    from .text import build_vocab, tokenize

    if args.model:
        model = _load_model(args.model)
    else:
        mc, _ = resolve_configs(args, ModelConfig(d_emb=48, d_pe=48, heads=12, buckets=2 ** 16))
        model = None
    rng = np.random.default_rng(args.seed or 0)
    if args.corpus:
        texts = [d.text for d in prepare_documents(_read(args.corpus))[0]]
        docs = [(tokenize(t) * args.length)[: args.length] for t in texts[:50]]
    else:
        docs = [[FILLER[j] for j in rng.integers(0, len(FILLER), args.length)]
                for _ in range(20)]
    if model is None:
        model = SentimentModel.build(mc, build_vocab(docs, 1), docs)
    cfg = model.config
    gru = GruClassifier(model.table.vocab, cfg.d_model, args.units, cfg.buckets, cfg.seed)
    threads = _threads()
    _echo("bench", model=cfg.to_dict(), gru_units=args.units, length=args.length,
          reps=args.reps, warmup=args.warmup, threads=threads)
    try:
        reports = bench({"self-attention": model.forward, "gru": gru.forward},
                        docs, args.reps, args.warmup, threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.format == "json":
        for r in reports:
            print(r.to_json())
    else:
        print(format_table(reports))
    if args.out:
        Path(args.out).write_text("".join(r.to_json() + "\n" for r in reports))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .training import grad_check

    mc = ModelConfig(d_emb=args.d_emb or 8, d_pe=args.d_pe or 8, heads=args.heads or 4,
                     fusion=args.fusion or "concat", buckets=4096, min_count=1,
                     seed=args.seed or 0)
    _echo("gradcheck", model=mc.to_dict(), eps=args.eps, tolerance=args.tolerance)
    try:
        report = grad_check(mc, args.eps, args.tolerance)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(report.to_json())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="attnsent", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model_flags=False, train_flags=False):
        p.add_argument("--corpus", help="JSONL corpus of {text, label} records")
        p.add_argument("--model", help="model file to read or write")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help="seed for splits, init and shuffling")
        p.add_argument("--config", help="key = value file of config overrides")
        if model_flags:
            p.add_argument("--fusion", choices=["add", "concat"])
            p.add_argument("--heads", type=int)
            p.add_argument("--d-emb", dest="d_emb", type=int)
            p.add_argument("--d-pe", dest="d_pe", type=int)
            p.add_argument("--buckets", type=int)
            p.add_argument("--min-count", dest="min_count", type=int)
            p.add_argument("--max-len", dest="max_len", type=int)
        if train_flags:
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch-size", dest="batch_size", type=int)
            p.add_argument("--gamma", type=float)
            p.add_argument("--lr", type=float)
        return p

    p = common(sub.add_parser("prepare", help="normalize and balance a corpus"))
    p.add_argument("--length-threshold", type=int, default=2,
                   help="documents with fewer sentences are duplicated")
    p.set_defaults(func=cmd_prepare)

    p = common(sub.add_parser("train", help="train a model"), True, True)
    p.add_argument("--report", help="write the test-split evaluation here")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval", help="evaluate a model on a labelled corpus"))
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("predict", help="classify --text or stdin lines"))
    p.add_argument("--text", help="text to classify; reads stdin lines if omitted")
    p.set_defaults(func=cmd_predict)

    p = common(sub.add_parser("bench", help="latency: self-attention vs GRU"), True)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--units", type=int, default=256, help="GRU hidden units")
    p.add_argument("--length", type=int, default=64, help="tokens per document")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_bench)

    p = common(sub.add_parser("gradcheck", help="finite-difference gradient check"), True)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _threads() -> int:
    raw = os.environ.get("ATTNSENT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise UsageError(f"ATTNSENT_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise UsageError("ATTNSENT_THREADS must be >= 1")
    return n


def run(argv=None) -> int:
    from .training import TrainingDiverged

    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with threadpool_limits(limits=_threads()):
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, NonFiniteError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
