"""Comparison blocks and ablation variants.

Six assemblies share the embedding layer and prediction head and differ only
in the per-layer block:

  full      multi-channel attention + two-stage FFN (the reference model)
  no_mffn   multi-channel attention + fusion projection only
  no_ams    causal softmax attention + two-stage FFN
  base      causal softmax attention + fusion projection only
  vanilla   causal softmax attention + two-layer relu FFN (SASRec-style block)
  hstu_like single SiLU channel with additive time/position biases, gated,
            fusion projection only (no FFN stage)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import (
    BLOCK_APPLIERS,
    AttnContext,
    BlockParams,
    ModelConfig,
    ModelParams,
    SequenceBatch,
    VARIANT_KINDS,
    _ams,
    _cat_heads,
    _per_head,
    build_attn_context,
    init_params,
    mffn,
    stage_one,
)
from .tensor import Tensor


@dataclass(frozen=True)
class VariantSpec:
    """Selects one of the closed set of model assemblies."""

    kind: str

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ValueError(f"unknown variant kind {self.kind!r}; expected one of {VARIANT_KINDS}")


def build_variant(spec: VariantSpec | str, cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Initialized parameters for the requested assembly."""
    kind = spec.kind if isinstance(spec, VariantSpec) else VariantSpec(kind=spec).kind
    return init_params(cfg, kind, seed)


# softmax attention sublayer -----------------------------------------------------


def _vanilla_attn(x: Tensor, ctx: AttnContext, layer: BlockParams, cfg: ModelConfig) -> Tensor:
    """Pre-norm causal multi-head softmax attention; returns concatenated heads."""
    xt = T.rms_norm(x, layer.attn_gain, cfg.rms_eps)
    q = T.matmul(xt, layer.w_q)
    k = T.matmul(xt, layer.w_k)
    v = T.matmul(xt, layer.w_v)
    outs = []
    inv_sqrt = 1.0 / np.sqrt(cfg.d_h)
    for h in range(cfg.heads):
        qh = _per_head(q, h, cfg.d_h, cfg.heads)
        kh = _per_head(k, h, cfg.d_h, cfg.heads)
        vh = _per_head(v, h, cfg.d_h, cfg.heads)
        scores = T.scale(T.matmul(qh, T.swap_last(kh)), inv_sqrt)
        weights = T.masked_softmax(scores, ctx.allowed)
        outs.append(T.matmul(weights, vh))
    return _cat_heads(outs)


def vanilla_attention_block(
    x: Tensor, batch: SequenceBatch, layer: BlockParams, cfg: ModelConfig
) -> Tensor:
    """Softmax attention + residual, then a two-layer pointwise FFN + residual."""
    ctx = build_attn_context(batch, cfg)
    return _apply_vanilla(x, ctx, layer, cfg)


def _relu_ffn(o: Tensor, layer: BlockParams, cfg: ModelConfig) -> Tensor:
    on = T.rms_norm(o, layer.ffn_gain, cfg.rms_eps)
    f = T.matmul(T.relu(T.matmul(on, layer.w_1)), layer.w_2)
    return T.add(f, o)


def _apply_vanilla(x: Tensor, ctx: AttnContext, layer: BlockParams, cfg: ModelConfig) -> Tensor:
    o = stage_one(_vanilla_attn(x, ctx, layer, cfg), x, layer)
    return _relu_ffn(o, layer, cfg)


# HSTU-like sublayer ---------------------------------------------------------------


def hstu_channel_output(
    x: Tensor, batch: SequenceBatch, layer: BlockParams, cfg: ModelConfig
) -> Tensor:
    """The single-channel attention output before normalization and gating."""
    ctx = build_attn_context(batch, cfg)
    xt = T.rms_norm(x, layer.attn_gain, cfg.rms_eps)
    return _hstu_channel(xt, ctx, layer, cfg)


def _hstu_channel(xt: Tensor, ctx: AttnContext, layer: BlockParams, cfg: ModelConfig) -> Tensor:
    q = T.silu(T.matmul(xt, layer.w_q))
    k = T.silu(T.matmul(xt, layer.w_k))
    v = T.silu(T.matmul(xt, layer.w_v))
    outs = []
    for h in range(cfg.heads):
        qh = _per_head(q, h, cfg.d_h, cfg.heads)
        kh = _per_head(k, h, cfg.d_h, cfg.heads)
        vh = _per_head(v, h, cfg.d_h, cfg.heads)
        sem = T.scale(T.silu(T.matmul(qh, T.swap_last(kh))), 1.0 / cfg.n)
        biased = T.add(T.add(sem, T.take(layer.alpha[h], ctx.bucket_idx)), T.take(layer.beta[h], ctx.rel_idx))
        outs.append(T.matmul(T.mul(biased, ctx.mask), vh))
    return _cat_heads(outs)


def hstu_like_block(
    x: Tensor, batch: SequenceBatch, layer: BlockParams, cfg: ModelConfig
) -> Tensor:
    """Gated single-channel SiLU attention with additive biases; projection + residual."""
    ctx = build_attn_context(batch, cfg)
    return _apply_hstu_like(x, ctx, layer, cfg)


def _apply_hstu_like(x: Tensor, ctx: AttnContext, layer: BlockParams, cfg: ModelConfig) -> Tensor:
    xt = T.rms_norm(x, layer.attn_gain, cfg.rms_eps)
    gate = T.silu(T.matmul(xt, layer.w_u))
    attn = _hstu_channel(xt, ctx, layer, cfg)
    gated = T.mul(T.rms_norm(attn, None, cfg.rms_eps), gate)
    return stage_one(gated, x, layer)


# variant wiring --------------------------------------------------------------------


def _apply_no_ams(x, ctx, layer, cfg):
    return mffn(_vanilla_attn(x, ctx, layer, cfg), x, layer, cfg)


def _apply_no_mffn(x, ctx, layer, cfg):
    return stage_one(_ams(x, ctx, layer, cfg), x, layer)


def _apply_base(x, ctx, layer, cfg):
    return stage_one(_vanilla_attn(x, ctx, layer, cfg), x, layer)


BLOCK_APPLIERS.update(
    {
        "no_ams": _apply_no_ams,
        "no_mffn": _apply_no_mffn,
        "base": _apply_base,
        "vanilla": _apply_vanilla,
        "hstu_like": _apply_hstu_like,
    }
)
