"""The FuXi-alpha network: embeddings, stacked blocks, prediction, sampled loss.

Each block pairs a multi-channel SiLU attention layer (separate semantic,
positional, and temporal weight channels sharing one value projection, gated
by a learned projection of the input) with a two-stage feed-forward network
(channel fusion + residual, then a gated SwiGLU transform + residual).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

VARIANT_KINDS = ("full", "base", "no_ams", "no_mffn", "vanilla", "hstu_like")

INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    """All hyperparameters of the network."""

    vocab: int                     # embedding rows; row 0 is the padding item
    d: int = 50                    # embedding dimension
    d_h: int = 50                  # per-head attention dimension
    heads: int = 1                 # heads per channel
    d_ffn: int = 100               # feed-forward inner dimension
    layers: int = 2                # stacked blocks
    n: int = 200                   # maximum sequence length
    n_buckets: int = 128           # relative-time buckets
    negatives: int = 128           # sampled negatives per position
    time_bucket_base: float = 1.0  # seconds per bucketing unit
    max_time_span: int = 63_072_000  # two years; gaps beyond clamp to the last bucket
    rms_eps: float = 1e-6

    def __post_init__(self):
        problems = []
        for name in ("vocab", "d", "d_h", "heads", "d_ffn", "n", "n_buckets", "negatives"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        if self.n_buckets < 2:
            problems.append("n_buckets must be >= 2")
        if self.vocab < 2:
            problems.append("vocab must be >= 2 (padding row plus at least one item)")
        if self.layers < 0:
            problems.append("layers must be >= 0")
        if self.time_bucket_base <= 0 or self.max_time_span <= 0 or self.rms_eps <= 0:
            problems.append("time_bucket_base, max_time_span and rms_eps must be positive")
        if problems:
            raise ValueError("invalid ModelConfig: " + "; ".join(problems))

    @property
    def channel_width(self) -> int:
        return self.heads * self.d_h


@dataclass
class SequenceBatch:
    """Padded item-id rows with timestamps and per-row valid lengths.

    Valid entries occupy a prefix of each row; item id 0 marks padding and
    timestamps are non-decreasing over the valid prefix.
    """

    items: np.ndarray       # int64 [B, n]
    timestamps: np.ndarray  # int64 [B, n]
    valid_len: np.ndarray   # int64 [B]

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=np.int64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.valid_len = np.asarray(self.valid_len, dtype=np.int64)
        b, n = self.items.shape
        if self.timestamps.shape != (b, n) or self.valid_len.shape != (b,):
            raise ValueError("SequenceBatch: inconsistent array shapes")
        pos = np.arange(n)
        valid = pos[None, :] < self.valid_len[:, None]
        if not np.array_equal(self.items > 0, valid):
            raise ValueError("SequenceBatch: items must be nonzero exactly on the valid prefix")
        if np.any(self.timestamps[~valid] != 0):
            raise ValueError("SequenceBatch: padding timestamps must be zero")
        both = valid[:, 1:] & valid[:, :-1]
        if np.any((self.timestamps[:, 1:] - self.timestamps[:, :-1])[both] < 0):
            raise ValueError("SequenceBatch: timestamps must be non-decreasing over the valid prefix")

    @property
    def size(self) -> int:
        return self.items.shape[0]


@dataclass
class BlockParams:
    """Learnable parameters of one block; populated fields depend on the variant."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    attn_gain: Tensor
    w_u: Tensor | None = None
    alpha: list[Tensor] = field(default_factory=list)   # per-head time-bucket biases
    beta: list[Tensor] = field(default_factory=list)    # per-head position biases
    ffn_gain: Tensor | None = None
    w_1: Tensor | None = None
    w_2: Tensor | None = None
    w_3: Tensor | None = None

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for name in ("w_q", "w_k", "w_v", "w_o", "attn_gain", "w_u", "ffn_gain", "w_1", "w_2", "w_3"):
            t = getattr(self, name)
            if t is not None:
                yield f"{prefix}.{name}", t
        for h, t in enumerate(self.alpha):
            yield f"{prefix}.alpha.{h}", t
        for h, t in enumerate(self.beta):
            yield f"{prefix}.beta.{h}", t


@dataclass
class ModelParams:
    """Item/positional embeddings plus per-layer block parameters."""

    kind: str
    item_emb: Tensor   # [vocab, d]; row 0 frozen at zero for the padding item
    pos_emb: Tensor    # [n, d]
    blocks: list[BlockParams]

    def named(self) -> Iterator[tuple[str, Tensor]]:
        yield "item_embeddings", self.item_emb
        yield "positional_embeddings", self.pos_emb
        for i, blk in enumerate(self.blocks):
            yield from blk.named(f"blocks.{i}")

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]


def _normal(rng: np.random.Generator, shape) -> Tensor:
    return Tensor(rng.normal(0.0, INIT_STD, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def init_block(kind: str, cfg: ModelConfig, rng: np.random.Generator) -> BlockParams:
    h = cfg.channel_width
    d = cfg.d
    if kind not in VARIANT_KINDS:
        raise ValueError(f"unknown variant kind: {kind!r}")
    blk = BlockParams(
        w_q=_normal(rng, (d, h)),
        w_k=_normal(rng, (d, h)),
        w_v=_normal(rng, (d, h)),
        w_o=_normal(rng, (3 * h if kind in ("full", "no_mffn") else h, d)),
        attn_gain=_ones(d),
    )
    if kind in ("full", "no_mffn"):
        blk.w_u = _normal(rng, (d, 3 * h))
        blk.alpha = [_zeros(cfg.n_buckets) for _ in range(cfg.heads)]
        blk.beta = [_zeros(cfg.n) for _ in range(cfg.heads)]
    if kind == "hstu_like":
        blk.w_u = _normal(rng, (d, h))
        blk.alpha = [_zeros(cfg.n_buckets) for _ in range(cfg.heads)]
        blk.beta = [_zeros(cfg.n) for _ in range(cfg.heads)]
    if kind in ("full", "no_ams"):
        blk.ffn_gain = _ones(d)
        blk.w_1 = _normal(rng, (d, cfg.d_ffn))
        blk.w_2 = _normal(rng, (d, cfg.d_ffn))
        blk.w_3 = _normal(rng, (cfg.d_ffn, d))
    if kind == "vanilla":
        blk.ffn_gain = _ones(d)
        blk.w_1 = _normal(rng, (d, cfg.d_ffn))
        blk.w_2 = _normal(rng, (cfg.d_ffn, d))
    return blk


def init_params(cfg: ModelConfig, kind: str = "full", seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    item_emb = _normal(rng, (cfg.vocab, cfg.d))
    item_emb.data[0, :] = 0.0
    pos_emb = _normal(rng, (cfg.n, cfg.d))
    blocks = [init_block(kind, cfg, rng) for _ in range(cfg.layers)]
    return ModelParams(kind=kind, item_emb=item_emb, pos_emb=pos_emb, blocks=blocks)


def count_params(params: ModelParams) -> int:
    """Number of learnable scalars actually allocated."""
    return sum(t.size for t in params.tensors())


def param_count(cfg: ModelConfig) -> int:
    """Closed-form learnable-scalar count of the full model for this config."""
    h = cfg.channel_width
    per_block = (
        3 * cfg.d * h          # q, k, v projections
        + cfg.d * 3 * h        # gate projection
        + 3 * h * cfg.d        # fusion projection
        + 2 * cfg.d * cfg.d_ffn + cfg.d_ffn * cfg.d  # SwiGLU stage
        + cfg.heads * cfg.n_buckets                  # temporal biases
        + cfg.heads * cfg.n                          # positional biases
        + 2 * cfg.d                                  # the two rms gains
    )
    return cfg.vocab * cfg.d + cfg.n * cfg.d + cfg.layers * per_block


# time bucketing --------------------------------------------------------------


def bucket_indices(delta: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Map non-negative time differences (seconds) to bucket ids in [0, n_buckets).

    The first half of the buckets is exact in time_bucket_base units; the
    rest are log-spaced up to max_time_span and clamp to the last bucket.
    """
    u = np.asarray(delta, dtype=np.float64) / cfg.time_bucket_base
    half = cfg.n_buckets // 2
    max_u = cfg.max_time_span / cfg.time_bucket_base
    out = np.empty(u.shape, dtype=np.int64)
    small = u < half
    out[small] = u[small].astype(np.int64)
    if max_u <= half:
        out[~small] = cfg.n_buckets - 1
    else:
        frac = np.log(u[~small] / half) / math.log(max_u / half)
        out[~small] = np.minimum(
            half + (frac * (cfg.n_buckets - half)).astype(np.int64),
            cfg.n_buckets - 1,
        )
    return out


def relative_time_bucket(delta_t: float, cfg: ModelConfig) -> int:
    """Bucket id for a single non-negative timestamp difference."""
    if delta_t < 0:
        raise ValueError(f"relative_time_bucket: delta_t must be non-negative, got {delta_t}")
    return int(bucket_indices(np.array([delta_t]), cfg)[0])


# attention context ------------------------------------------------------------


@dataclass
class AttnContext:
    """Batch-level constants shared by every layer's attention."""

    mask: Tensor          # [B, n, n] 0/1 float; 1 where j <= i and j is a valid position
    allowed: np.ndarray   # same predicate as bool, for softmax-style masking
    bucket_idx: np.ndarray  # [B, n, n] time bucket of t_i - t_j (clipped at 0)
    rel_idx: np.ndarray     # [n, n] index distance i - j (clipped at 0)


def build_attn_context(batch: SequenceBatch, cfg: ModelConfig) -> AttnContext:
    b, n = batch.items.shape
    pos = np.arange(n)
    tri = pos[:, None] >= pos[None, :]
    col_valid = pos[None, None, :] < batch.valid_len[:, None, None]
    allowed = tri[None, :, :] & col_valid
    delta = batch.timestamps[:, :, None] - batch.timestamps[:, None, :]
    bucket_idx = bucket_indices(np.maximum(delta, 0), cfg)
    rel_idx = np.maximum(pos[:, None] - pos[None, :], 0)
    return AttnContext(
        mask=Tensor(allowed.astype(np.float64)),
        allowed=allowed,
        bucket_idx=bucket_idx,
        rel_idx=rel_idx,
    )


# layers ----------------------------------------------------------------------


def embed_sequence(batch: SequenceBatch, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Item embedding plus positional embedding on the valid prefix, zeros at padding."""
    if batch.items.max(initial=0) >= cfg.vocab:
        raise ValueError(
            f"embed_sequence: item id {int(batch.items.max())} out of range for vocab {cfg.vocab}"
        )
    n = batch.items.shape[1]
    if n > cfg.n:
        raise ValueError(f"embed_sequence: sequence length {n} exceeds configured n={cfg.n}")
    valid = (np.arange(n)[None, :] < batch.valid_len[:, None]).astype(np.float64)
    e = T.take_rows(params.item_emb, batch.items)
    p = T.take_rows(params.pos_emb, np.broadcast_to(np.arange(n), batch.items.shape))
    return T.mul(T.add(e, p), Tensor(valid[:, :, None]))


def _per_head(t: Tensor, h: int, d_h: int, heads: int) -> Tensor:
    if heads == 1:
        return t
    return T.slice_last(t, h * d_h, (h + 1) * d_h)


def ams_attention(x: Tensor, batch: SequenceBatch, layer: BlockParams, cfg: ModelConfig) -> Tensor:
    """Multi-channel attention: gated concat of semantic/positional/temporal channels."""
    return _ams(x, build_attn_context(batch, cfg), layer, cfg)


def ams_channel_outputs(
    x: Tensor, batch: SequenceBatch, layer: BlockParams, cfg: ModelConfig
) -> tuple[Tensor, Tensor, Tensor]:
    """Per-channel attention outputs (semantic, positional, temporal) before fusion."""
    ctx = build_attn_context(batch, cfg)
    xt = T.rms_norm(x, layer.attn_gain, cfg.rms_eps)
    return _channels(xt, ctx, layer, cfg)


def _cat_heads(parts: list[Tensor]) -> Tensor:
    return parts[0] if len(parts) == 1 else T.concat(parts, axis=-1)


def _channels(xt: Tensor, ctx: AttnContext, layer: BlockParams, cfg: ModelConfig):
    q = T.silu(T.matmul(xt, layer.w_q))
    k = T.silu(T.matmul(xt, layer.w_k))
    v = T.silu(T.matmul(xt, layer.w_v))
    sem_outs, pos_outs, tmp_outs = [], [], []
    for h in range(cfg.heads):
        qh = _per_head(q, h, cfg.d_h, cfg.heads)
        kh = _per_head(k, h, cfg.d_h, cfg.heads)
        vh = _per_head(v, h, cfg.d_h, cfg.heads)
        sem = T.mul(T.scale(T.silu(T.matmul(qh, T.swap_last(kh))), 1.0 / cfg.n), ctx.mask)
        pos = T.mul(T.take(layer.beta[h], ctx.rel_idx), ctx.mask)
        tmp = T.mul(T.take(layer.alpha[h], ctx.bucket_idx), ctx.mask)
        sem_outs.append(T.matmul(sem, vh))
        pos_outs.append(T.matmul(pos, vh))
        tmp_outs.append(T.matmul(tmp, vh))
    return _cat_heads(sem_outs), _cat_heads(pos_outs), _cat_heads(tmp_outs)


def _ams(x: Tensor, ctx: AttnContext, layer: BlockParams, cfg: ModelConfig) -> Tensor:
    xt = T.rms_norm(x, layer.attn_gain, cfg.rms_eps)
    gate = T.silu(T.matmul(xt, layer.w_u))
    sem, pos, tmp = _channels(xt, ctx, layer, cfg)
    stacked = T.concat([sem, pos, tmp], axis=-1)
    normed = T.rms_norm(stacked, None, cfg.rms_eps)
    return T.mul(normed, gate)


def mffn(h: Tensor, x_prev: Tensor, layer: BlockParams, cfg: ModelConfig) -> Tensor:
    """Two-stage feed-forward: channel fusion + residual, then SwiGLU + residual."""
    o = stage_one(h, x_prev, layer)
    on = T.rms_norm(o, layer.ffn_gain, cfg.rms_eps)
    inner = T.mul(T.silu(T.matmul(on, layer.w_1)), T.matmul(on, layer.w_2))
    return T.add(T.matmul(inner, layer.w_3), o)


def stage_one(h: Tensor, x_prev: Tensor, layer: BlockParams) -> Tensor:
    """Fusion projection of the attention output plus the layer's residual input."""
    return T.add(T.matmul(h, layer.w_o), x_prev)


def _apply_full_block(x: Tensor, ctx: AttnContext, layer: BlockParams, cfg: ModelConfig) -> Tensor:
    return mffn(_ams(x, ctx, layer, cfg), x, layer, cfg)


# Block appliers per variant kind; baselines registers the other kinds.
BLOCK_APPLIERS: dict[str, Callable[[Tensor, AttnContext, BlockParams, ModelConfig], Tensor]] = {
    "full": _apply_full_block,
}


def forward_hidden(batch: SequenceBatch, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Hidden states after the embedding layer and all stacked blocks."""
    try:
        apply = BLOCK_APPLIERS[params.kind]
    except KeyError:
        raise ValueError(f"no block applier registered for kind {params.kind!r}") from None
    x = embed_sequence(batch, params, cfg)
    if params.blocks:
        ctx = build_attn_context(batch, cfg)
        for blk in params.blocks:
            x = apply(x, ctx, blk, cfg)
    return x


def forward(batch: SequenceBatch, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Pre-softmax scores over the catalog at every position: hidden @ E^T."""
    hidden = forward_hidden(batch, params, cfg)
    return T.matmul(hidden, T.swap_last(params.item_emb))


def sampled_softmax_loss(pos_scores: Tensor, neg_scores: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over unmasked positions of -log(exp(s+) / (exp(s+) + sum exp(s-)))."""
    if neg_scores.shape[-1] < 1:
        raise ValueError("sampled_softmax_loss: need at least one negative score")
    mask = np.asarray(mask, dtype=np.float64)
    total = mask.sum()
    if total == 0:
        raise ValueError("sampled_softmax_loss: all positions are masked")
    b, n = pos_scores.shape
    all_scores = T.concat([T.reshape(pos_scores, (b, n, 1)), neg_scores], axis=-1)
    per_pos = T.add(T.logsumexp(all_scores), T.scale(pos_scores, -1.0))
    return T.scale(T.mul(per_pos, Tensor(mask)).sum(), 1.0 / total)


def predict_next(
    items: Sequence[int],
    timestamps: Sequence[int],
    params: ModelParams,
    cfg: ModelConfig,
    k: int,
) -> list[int]:
    """Top-k next items at the end of one history; ties break by ascending id."""
    items = np.asarray(items, dtype=np.int64)
    timestamps = np.asarray(timestamps, dtype=np.int64)
    if items.size == 0:
        raise ValueError("predict_next: history is empty")
    if not 1 <= k <= cfg.vocab - 1:
        raise ValueError(f"predict_next: k must lie in [1, {cfg.vocab - 1}]")
    if items.size > cfg.n:
        items = items[-cfg.n:]
        timestamps = timestamps[-cfg.n:]
    length = items.size
    row_items = np.zeros((1, cfg.n), dtype=np.int64)
    row_ts = np.zeros((1, cfg.n), dtype=np.int64)
    row_items[0, :length] = items
    row_ts[0, :length] = timestamps
    batch = SequenceBatch(row_items, row_ts, np.array([length]))
    hidden = forward_hidden(batch, params, cfg).data[0, length - 1]
    scores = params.item_emb.data[1:] @ hidden
    ids = np.arange(1, cfg.vocab)
    order = np.lexsort((ids, -scores))
    return [int(ids[i]) for i in order[:k]]
