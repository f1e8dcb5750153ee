"""The sentiment classifier: embeddings, concatenated positional encoding,
one multi-head self-attention block, a feature gate and a softmax head."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import _kernels
from . import tensor as T
from .attention import AttentionHeadParams, MultiHeadParams, multi_head, multi_head_backward
from .feature_attention import SEParams, squeeze_excite, squeeze_excite_backward
from .losses import focal_loss, focal_loss_grad_logits
from .positional import PECache, fuse_add, fuse_backward, fuse_concat
from .text import EmbeddingTable, TokenBag, Vocabulary, normalize, tokenize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    d_emb: int = 384
    d_pe: int = 384
    heads: int = 12
    fusion: str = "concat"
    r: int = 4
    ffn_width: int | None = None  # None means 4 * d_model
    use_ffn: bool = True
    use_residual_norm: bool = True
    max_len: int = 256
    n_classes: int = 2
    buckets: int = 2 ** 20
    minn: int = 3
    maxn: int = 6
    min_count: int = 5
    ln_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.fusion not in ("add", "concat"):
            raise ValueError(f"fusion must be 'add' or 'concat', got {self.fusion!r}")
        if self.d_pe < 2 or self.d_pe % 2:
            raise ValueError("d_pe must be even and >= 2")
        if self.fusion == "add" and self.d_pe != self.d_emb:
            raise ValueError("add fusion requires d_pe == d_emb")
        if self.heads < 1 or self.d_model % self.heads:
            raise ValueError(f"{self.heads} heads do not divide d_model={self.d_model}")
        if self.r < 1 or self.d_model % self.r:
            raise ValueError(f"reduction ratio {self.r} does not divide d_model={self.d_model}")
        if self.n_classes != 2:
            raise ValueError("only two classes are supported")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")

    @property
    def d_model(self) -> int:
        return self.d_emb + self.d_pe if self.fusion == "concat" else self.d_emb

    @property
    def hidden(self) -> int:
        return self.ffn_width or 4 * self.d_model

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, int]]:
    d, hid, h = config.d_model, config.hidden, config.heads
    shapes = {}
    for i in range(h):
        for kind in ("wq", "wk", "wv"):
            shapes[f"attn.{kind}.{i}"] = (d, d // h)
    shapes["attn.wo"] = (d, d)
    if config.use_residual_norm:
        shapes["ln1.gain"] = shapes["ln1.offset"] = (1, d)
    if config.use_ffn:
        shapes.update({"ffn.w1": (d, hid), "ffn.b1": (1, hid),
                       "ffn.w2": (hid, d), "ffn.b2": (1, d)})
        if config.use_residual_norm:
            shapes["ln2.gain"] = shapes["ln2.offset"] = (1, d)
    shapes["se.w_fc1"] = (d, d // config.r)
    shapes["se.w_fc2"] = (d // config.r, d)
    shapes["cls.w"] = (d, 2)
    shapes["cls.b"] = (1, 2)
    return shapes


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Dense parameters keyed by stable names, in a fixed creation order."""
    d, hid = config.d_model, config.hidden

    def uni(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape)

    params = {}
    d_k = d // config.heads
    for i in range(config.heads):
        for kind in ("wq", "wk", "wv"):
            params[f"attn.{kind}.{i}"] = uni(d, (d, d_k))
    params["attn.wo"] = uni(d, (d, d))
    if config.use_residual_norm:
        params["ln1.gain"] = np.ones((1, d))
        params["ln1.offset"] = np.zeros((1, d))
    if config.use_ffn:
        params["ffn.w1"] = uni(d, (d, hid))
        params["ffn.b1"] = np.zeros((1, hid))
        params["ffn.w2"] = uni(hid, (hid, d))
        params["ffn.b2"] = np.zeros((1, d))
        if config.use_residual_norm:
            params["ln2.gain"] = np.ones((1, d))
            params["ln2.offset"] = np.zeros((1, d))
    params["se.w_fc1"] = uni(d, (d, d // config.r))
    params["se.w_fc2"] = uni(d // config.r, (d // config.r, d))
    params["cls.w"] = uni(d, (d, 2))
    params["cls.b"] = np.zeros((1, 2))
    return params


class SentimentModel:
    """Parameters plus forward/backward for one document at a time.

    ``params`` holds every dense array by name; ``table`` holds the
    embedding rows. Optimizers update arrays in place, which keeps the
    attention and gate views below in sync.
    """

    def __init__(self, config: ModelConfig, table: EmbeddingTable,
                 params: dict[str, np.ndarray]):
        if table.dim != config.d_emb:
            raise ValueError(f"embedding dim {table.dim} != d_emb {config.d_emb}")
        expected = param_shapes(config)
        got = {k: tuple(v.shape) for k, v in params.items()}
        if got != expected:
            diff = sorted(set(expected.items()) ^ set(got.items()))
            raise ValueError(f"parameter set does not match config: {diff[:4]}")
        self.config = config
        self.table = table
        self.params = params
        self.pe = PECache(config.d_pe, config.max_len)
        self._bind()

    def _bind(self):
        p = self.params
        self.mha = MultiHeadParams(
            [AttentionHeadParams(p[f"attn.wq.{i}"], p[f"attn.wk.{i}"], p[f"attn.wv.{i}"])
             for i in range(self.config.heads)],
            p["attn.wo"],
        )
        self.se = SEParams(p["se.w_fc1"], p["se.w_fc2"])

    @classmethod
    def build(cls, config: ModelConfig, vocab: Vocabulary,
              token_lists: Sequence[Sequence[str]] = ()) -> "SentimentModel":
        """Fresh model; buckets for ``token_lists`` are materialized up front."""
        table = EmbeddingTable(vocab, config.d_emb, config.buckets, config.minn,
                               config.maxn, seed=config.seed)
        table.grow(token_lists)
        params = init_params(config, np.random.default_rng(config.seed))
        return cls(config, table, params)

    # -- input handling -------------------------------------------------

    def tokens(self, text: str) -> list[str]:
        toks = tokenize(normalize(text))
        if not toks:
            raise ValueError("document has no tokens after normalization")
        return self.truncate(toks)

    def truncate(self, tokens: Sequence[str]) -> list[str]:
        if len(tokens) > self.config.max_len:
            log.warning("truncating %d tokens to max_len=%d", len(tokens), self.config.max_len)
            return list(tokens[: self.config.max_len])
        return list(tokens)

    def bag(self, tokens: Sequence[str], grow: bool = False) -> TokenBag:
        if len(tokens) == 0:
            raise ValueError("empty token sequence")
        return self.table.bag(self.truncate(tokens), grow)

    # -- forward / backward --------------------------------------------

    def forward(self, tokens, mask=None, *, zero_pe: bool = False, return_cache: bool = False):
        """Class probabilities ``[p_neg, p_pos]`` for a token list or a prepared bag."""
        bag = tokens if isinstance(tokens, TokenBag) else self.bag(tokens)
        cfg, p = self.config, self.params
        emb = _kernels.bag_mean(self.table.gather(bag.rows), bag.inverse, bag.offsets)
        n = emb.shape[0]
        pe = np.zeros((n, cfg.d_pe)) if zero_pe else self.pe.get(n)
        z = fuse_concat(emb, pe) if cfg.fusion == "concat" else fuse_add(emb, pe)

        attn, attn_cache = multi_head(z, self.mha, mask, return_cache=True)
        ln1 = ln2 = None
        if cfg.use_residual_norm:
            h1, ln1 = T.layer_norm(z + attn, p["ln1.gain"], p["ln1.offset"], cfg.ln_eps)
        else:
            h1 = attn
        a1 = None
        if cfg.use_ffn:
            a1 = h1 @ p["ffn.w1"] + p["ffn.b1"]
            f = T.relu(a1) @ p["ffn.w2"] + p["ffn.b2"]
            if cfg.use_residual_norm:
                h2, ln2 = T.layer_norm(h1 + f, p["ln2.gain"], p["ln2.offset"], cfg.ln_eps)
            else:
                h2 = f
        else:
            h2 = h1
        s, se_cache = squeeze_excite(h2, self.se, mask, return_cache=True)
        pooled = T.global_average_pool(s, mask)
        logits = pooled @ p["cls.w"] + p["cls.b"]
        T.check_finite(logits, "logits")
        probs = T.softmax_rows(logits)[0]
        if not return_cache:
            return probs
        cache = dict(bag=bag, mask=mask, n=n, attn=attn_cache, ln1=ln1, h1=h1, a1=a1,
                     ln2=ln2, se=se_cache, pooled=pooled, logits=logits[0], probs=probs)
        return probs, cache

    def logits(self, tokens, mask=None, *, zero_pe: bool = False) -> np.ndarray:
        return self.forward(tokens, mask, zero_pe=zero_pe, return_cache=True)[1]["logits"]

    def backward(self, cache: dict, dlogits: np.ndarray):
        """Map a logits gradient onto every parameter.

        Returns ``(dense_grads, (emb_rows, emb_grads))``; embedding
        gradients cover only the rows the document touched.
        """
        cfg, p = self.config, self.params
        mask, n = cache["mask"], cache["n"]
        dlogits = np.asarray(dlogits, dtype=np.float64).reshape(1, -1)
        g = {"cls.w": cache["pooled"].T @ dlogits, "cls.b": dlogits.copy()}
        ds = T.global_average_pool_backward(dlogits @ p["cls.w"].T, n, mask)
        dh2, se_grads = squeeze_excite_backward(ds, self.se, cache["se"])
        g["se.w_fc1"], g["se.w_fc2"] = se_grads["w_fc1"], se_grads["w_fc2"]

        if cfg.use_ffn:
            if cfg.use_residual_norm:
                du, g["ln2.gain"], g["ln2.offset"] = T.layer_norm_backward(
                    dh2, p["ln2.gain"], cache["ln2"])
                df, dh1 = du, du.copy()
            else:
                df, dh1 = dh2, np.zeros_like(dh2)
            a1 = cache["a1"]
            r1 = T.relu(a1)
            g["ffn.w2"] = r1.T @ df
            g["ffn.b2"] = df.sum(axis=0, keepdims=True)
            da1 = T.relu_backward(df @ p["ffn.w2"].T, a1)
            g["ffn.w1"] = cache["h1"].T @ da1
            g["ffn.b1"] = da1.sum(axis=0, keepdims=True)
            dh1 += da1 @ p["ffn.w1"].T
        else:
            dh1 = dh2

        if cfg.use_residual_norm:
            du, g["ln1.gain"], g["ln1.offset"] = T.layer_norm_backward(
                dh1, p["ln1.gain"], cache["ln1"])
            dattn, dz = du, du.copy()
        else:
            dattn, dz = dh1, np.zeros_like(dh1)
        dz_attn, attn_grads = multi_head_backward(dattn, self.mha, cache["attn"])
        dz += dz_attn
        for k, v in attn_grads.items():
            g[f"attn.{k}"] = v
        demb = fuse_backward(dz, cfg.fusion, cfg.d_emb)
        return g, self.table.lookup_backward(demb, cache["bag"])

    def loss_and_grad(self, tokens, target: int, gamma: float = 2.0, alpha=1.0):
        """Focal loss of one labelled document and all its gradients."""
        probs, cache = self.forward(tokens, return_cache=True)
        loss = focal_loss(probs, target, gamma, alpha)
        dense, emb = self.backward(cache, focal_loss_grad_logits(probs, target, gamma, alpha))
        return loss, dense, emb

    def predict_proba(self, text: str) -> np.ndarray:
        return self.forward(self.tokens(text))
