"""Optimization loop: decoupled-weight-decay adaptive moments, per-position
negative sampling, and early stopping on validation ranking quality."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import DatasetSplit, batch_iterator
from .evaluate import evaluate
from .model import ModelConfig, ModelParams, init_params, sampled_softmax_loss
from .model import forward_hidden
from .tensor import Tape, backward


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    eval_every: int = 1   # epochs between validation evaluations
    patience: int = 0     # evaluations without improvement before stopping; 0 disables

    def __post_init__(self):
        problems = []
        if self.lr <= 0:
            problems.append("lr must be positive")
        if self.weight_decay < 0:
            problems.append("weight_decay must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            problems.append("betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            problems.append("adam_eps must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.eval_every < 0 or self.patience < 0:
            problems.append("epochs/batch_size/eval_every/patience out of range")
        if problems:
            raise ValueError("invalid TrainConfig: " + "; ".join(problems))


class AdamW:
    """Adaptive moments with decoupled weight decay."""

    def __init__(self, named_params, cfg: TrainConfig):
        self.params = [(name, t) for name, t in named_params if t.requires_grad]
        self.cfg = cfg
        self.m = {name: np.zeros_like(t.data) for name, t in self.params}
        self.v = {name: np.zeros_like(t.data) for name, t in self.params}
        self.t = 0

    def step(self) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for name, p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)
            p.data -= c.lr * (update + c.weight_decay * p.data)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None


# negative sampling ------------------------------------------------------------


def sample_negatives_batch(
    positives: np.ndarray, n_neg: int, vocab: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-position negatives: uniform over [1, vocab) excluding the positive,
    distinct within each position's draw, independent across positions."""
    if n_neg < 1:
        raise ValueError("sample_negatives: need at least one negative")
    if n_neg > vocab - 2:
        raise ValueError(f"sample_negatives: N={n_neg} too large for vocab {vocab} (max {vocab - 2})")
    pos = np.asarray(positives, dtype=np.int64)
    flat = pos.ravel()
    rows = flat.size
    if n_neg > (vocab - 2) * 0.6:
        # dense draw: enumerate candidates and take a seeded partial shuffle
        out = np.empty((rows, n_neg), dtype=np.int64)
        for r in range(rows):
            cands = np.concatenate([np.arange(1, flat[r]), np.arange(flat[r] + 1, vocab)])
            out[r] = rng.permutation(cands)[:n_neg]
    else:
        out = rng.integers(1, vocab, size=(rows, n_neg))
        active = np.arange(rows)  # rows that may still hold collisions
        for _ in range(200):
            sub = out[active]
            bad = sub == flat[active, None]
            order = np.argsort(sub, axis=1, kind="stable")
            srt = np.take_along_axis(sub, order, axis=1)
            dup_sorted = np.zeros_like(bad)
            dup_sorted[:, 1:] = srt[:, 1:] == srt[:, :-1]
            dup = np.zeros_like(bad)
            np.put_along_axis(dup, order, dup_sorted, axis=1)
            bad |= dup
            row_bad = bad.any(axis=1)
            if not row_bad.any():
                break
            sub[bad] = rng.integers(1, vocab, size=int(bad.sum()))
            out[active] = sub
            active = active[row_bad]
        else:
            raise RuntimeError("sample_negatives: resampling did not converge")
    return out.reshape(pos.shape + (n_neg,))


def sample_negatives(positive: int, n_neg: int, vocab: int, rng: np.random.Generator) -> np.ndarray:
    """Negatives for one position; see sample_negatives_batch."""
    return sample_negatives_batch(np.array([positive]), n_neg, vocab, rng)[0]


# training ----------------------------------------------------------------------


@dataclass
class TrainResult:
    params: ModelParams
    loss_history: list[float] = field(default_factory=list)       # per-epoch mean loss
    val_history: list[tuple[int, float]] = field(default_factory=list)  # (epoch, validation ndcg@10)
    best_epoch: int | None = None


def next_item_targets(batch) -> tuple[np.ndarray, np.ndarray]:
    """Shifted targets within the batch rows plus the contribute-to-loss mask."""
    targets = np.zeros_like(batch.items)
    targets[:, :-1] = batch.items[:, 1:]
    return targets, (targets > 0).astype(np.float64)


def train_step(
    batch,
    params: ModelParams,
    cfg: ModelConfig,
    opt: AdamW,
    rng: np.random.Generator,
) -> float | None:
    """One forward/backward/update; returns the loss or None if the batch has no targets."""
    targets, mask = next_item_targets(batch)
    if mask.sum() == 0:
        return None
    safe = np.where(targets > 0, targets, 1)
    negs = sample_negatives_batch(safe, cfg.negatives, cfg.vocab, rng)
    with Tape() as tape:
        hidden = forward_hidden(batch, params, cfg)
        pos = T.reshape(T.rows_dot(hidden, params.item_emb, targets[..., None]), targets.shape)
        neg = T.rows_dot(hidden, params.item_emb, negs)
        loss = sampled_softmax_loss(pos, neg, mask)
    value = loss.item()
    if not np.isfinite(value):
        raise RuntimeError(
            f"train: non-finite loss {value} at optimizer step {opt.t + 1}; "
            "lower the learning rate or check the input data"
        )
    backward(loss, tape)
    opt.step()
    opt.zero_grad()
    params.item_emb.data[0, :] = 0.0
    return value


def train(
    variant,
    split: DatasetSplit,
    train_cfg: TrainConfig,
    model_cfg: ModelConfig,
    freeze_temporal: bool = False,
    initial_params: ModelParams | None = None,
) -> TrainResult:
    """Fit the requested variant on the split's training partition.

    freeze_temporal zeroes the time-bucket biases and keeps them fixed, which
    turns the temporal channel off while leaving the architecture unchanged.
    """
    kind = getattr(variant, "kind", variant)
    params = initial_params if initial_params is not None else init_params(model_cfg, kind, train_cfg.seed)
    if freeze_temporal:
        for blk in params.blocks:
            for a in blk.alpha:
                a.data[:] = 0.0
                a.requires_grad = False
    opt = AdamW(params.named(), train_cfg)
    neg_rng = np.random.default_rng(train_cfg.seed + 1)
    result = TrainResult(params=params)
    best: ModelParams | None = None
    best_metric = -np.inf
    stale = 0
    for epoch in range(train_cfg.epochs):
        losses = []
        for batch in batch_iterator(
            split.train, train_cfg.batch_size, model_cfg.n, shuffle_seed=train_cfg.seed * 100_003 + epoch
        ):
            value = train_step(batch, params, model_cfg, opt, neg_rng)
            if value is not None:
                losses.append(value)
        result.loss_history.append(float(np.mean(losses)) if losses else float("nan"))
        run_eval = (
            train_cfg.eval_every > 0
            and (epoch + 1) % train_cfg.eval_every == 0
            and split.validation
            and train_cfg.patience > 0
        )
        if run_eval:
            report = evaluate(params, split.validation, [10], model_cfg)
            metric = report.ndcg[10]
            result.val_history.append((epoch, metric))
            if metric > best_metric:
                best_metric = metric
                best = copy.deepcopy(params)
                result.best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= train_cfg.patience:
                    break
    if best is not None:
        result.params = best
    return result
