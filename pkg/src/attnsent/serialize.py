"""Binary model container.

Layout (all integers little-endian)::

    magic        8 bytes  b"ATNSENT1"
    version      u32      FORMAT_VERSION
    config_len   u32
    config       config_len bytes of canonical JSON (sorted keys, no spaces)
    n_arrays     u32
    n_arrays times:
        name_len u16, name (UTF-8)
        dtype    u8   (1 = float32, 2 = int64, 3 = uint8)
        ndim     u8
        dims     ndim x u64
        payload  prod(dims) x itemsize bytes, C order

Weights are stored as float32 and widened back to float64 on load. The
vocabulary travels as ``vocab.words`` (UTF-8, newline-joined) and
``vocab.counts``; materialized n-gram buckets as ``emb.bucket_ids``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, SentimentModel
from .text import EmbeddingTable, Vocabulary

MAGIC = b"ATNSENT1"
FORMAT_VERSION = 1
SUPPORTED_VERSIONS = {1}

_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<i8"), 3: np.dtype("u1")}
_TAGS = {np.dtype("<f4"): 1, np.dtype("<i8"): 2, np.dtype("u1"): 3}


class ModelFormatError(ValueError):
    """The file is not a well-formed model container."""


class UnsupportedVersionError(ModelFormatError):
    pass


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def to_bytes(model: SentimentModel) -> bytes:
    table = model.table
    header = {
        "model": model.config.to_dict(),
        "embedding": {"dim": table.dim, "buckets": table.buckets, "minn": table.minn,
                      "maxn": table.maxn, "seed": table.seed,
                      "min_count": table.vocab.min_count},
    }
    arrays = [
        ("vocab.words", np.frombuffer("\n".join(table.vocab.words).encode(), dtype="u1")),
        ("vocab.counts", np.asarray(table.vocab.counts, dtype="<i8")),
        ("emb.bucket_ids", table.bucket_ids.astype("<i8")),
        ("emb.weights", table.weights.astype("<f4")),
    ]
    arrays += [(name, arr.astype("<f4")) for name, arr in model.params.items()]

    cfg = _canonical_json(header)
    out = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(cfg)), cfg,
           struct.pack("<I", len(arrays))]
    for name, arr in arrays:
        raw = name.encode()
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<BB", _TAGS[arr.dtype], arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def save(model: SentimentModel, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(model))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(
                f"truncated file: need {n} bytes for {what} at offset {self.pos}, "
                f"only {len(self.data) - self.pos} left")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def from_bytes(data: bytes) -> SentimentModel:
    rd = _Reader(data)
    magic = rd.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    (version,) = rd.unpack("<I", "version")
    if version not in SUPPORTED_VERSIONS:
        raise UnsupportedVersionError(
            f"model format version {version} at offset 8 is not supported "
            f"(supported: {sorted(SUPPORTED_VERSIONS)})")
    (cfg_len,) = rd.unpack("<I", "config length")
    cfg_at = rd.pos
    try:
        header = json.loads(rd.take(cfg_len, "config").decode())
        config = ModelConfig.from_dict(header["model"])
        emb = header["embedding"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"invalid config block at offset {cfg_at}: {exc}") from exc

    (count,) = rd.unpack("<I", "array count")
    arrays = {}
    for _ in range(count):
        at = rd.pos
        (name_len,) = rd.unpack("<H", "array name length")
        try:
            name = rd.take(name_len, "array name").decode()
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"undecodable array name at offset {at}") from exc
        tag, ndim = rd.unpack("<BB", f"dtype of {name}")
        if tag not in _DTYPES:
            raise ModelFormatError(f"unknown dtype tag {tag} for {name} at offset {rd.pos - 2}")
        dims = rd.unpack(f"<{ndim}Q", f"dims of {name}")
        dtype = _DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        payload = rd.take(nbytes, f"payload of {name}")
        arrays[name] = np.frombuffer(payload, dtype=dtype).reshape(dims)
    if rd.pos != len(data):
        raise ModelFormatError(f"{len(data) - rd.pos} trailing bytes at offset {rd.pos}")

    try:
        raw_words = arrays.pop("vocab.words").tobytes().decode()
        words = raw_words.split("\n") if raw_words else []
        vocab = Vocabulary(words, arrays.pop("vocab.counts").tolist(), emb["min_count"])
        table = EmbeddingTable(
            vocab, emb["dim"], emb["buckets"], emb["minn"], emb["maxn"], emb["seed"],
            weights=arrays.pop("emb.weights").astype(np.float64),
            bucket_ids=arrays.pop("emb.bucket_ids").tolist(),
        )
        params = {k: v.astype(np.float64) for k, v in arrays.items()}
        return SentimentModel(config, table, params)
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"inconsistent model contents: {exc}") from exc


def load(path: str | Path) -> SentimentModel:
    return from_bytes(Path(path).read_bytes())
