"""Throughput and scaling probes: training samples per second across sequence
lengths, and step-time/parameter growth along the layer or width axis."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import UserSequence, batch_iterator
from .model import ModelConfig, SequenceBatch, forward_hidden, init_params, param_count, sampled_softmax_loss
from .tensor import Tape, backward
from .train import next_item_targets, sample_negatives_batch


@dataclass
class BenchRecord:
    variant: str
    seq_len: int
    tps: float
    samples: int     # training samples processed inside the timed window
    elapsed: float


def _one_pass(dataset, params, cfg, batch_size, rng) -> int:
    """Forward + backward over the dataset once; returns samples processed."""
    processed = 0
    for batch in batch_iterator(dataset, batch_size, cfg.n, shuffle_seed=0):
        targets, mask = next_item_targets(batch)
        if mask.sum() == 0:
            processed += batch.size
            continue
        safe = np.where(targets > 0, targets, 1)
        negs = sample_negatives_batch(safe, cfg.negatives, cfg.vocab, rng)
        with Tape() as tape:
            hidden = forward_hidden(batch, params, cfg)
            pos = T.reshape(T.rows_dot(hidden, params.item_emb, targets[..., None]), targets.shape)
            neg = T.rows_dot(hidden, params.item_emb, negs)
            loss = sampled_softmax_loss(pos, neg, mask)
        backward(loss, tape)
        for t in params.tensors():
            t.grad = None
        processed += batch.size
    return processed


def tps_benchmark(
    variant: str,
    cfg_template: ModelConfig,
    seq_lengths: Sequence[int],
    batch_size: int,
    dataset: Sequence[UserSequence],
    seed: int = 0,
    passes: int = 3,
) -> list[BenchRecord]:
    """Samples/second over `passes` full forward+backward sweeps per length.

    A full warm-up pass runs first and is excluded from timing.
    """
    if len(dataset) < batch_size:
        raise ValueError(
            f"tps_benchmark: dataset of {len(dataset)} sequences too small for one batch of {batch_size}"
        )
    records = []
    for length in seq_lengths:
        cfg = replace(cfg_template, n=length)
        params = init_params(cfg, variant, seed)
        rng = np.random.default_rng(seed)
        _one_pass(dataset, params, cfg, batch_size, rng)  # warm-up, untimed
        start = time.perf_counter()
        processed = 0
        for _ in range(passes):
            processed += _one_pass(dataset, params, cfg, batch_size, rng)
        elapsed = time.perf_counter() - start
        records.append(
            BenchRecord(
                variant=variant,
                seq_len=length,
                tps=processed / elapsed,
                samples=processed,
                elapsed=elapsed,
            )
        )
    return records


@dataclass
class ProbeRow:
    value: int
    param_count: int
    step_time: float


@dataclass
class ProbeResult:
    axis: str
    rows: list[ProbeRow]
    r_squared: float


def _fixed_batch(cfg: ModelConfig, batch_size: int, seed: int) -> SequenceBatch:
    rng = np.random.default_rng(seed)
    items = rng.integers(1, cfg.vocab, size=(batch_size, cfg.n))
    ts = np.cumsum(rng.integers(1, 100, size=(batch_size, cfg.n)), axis=1)
    return SequenceBatch(items, ts, np.full(batch_size, cfg.n))


def _step_time(params, cfg, batch, rng, repeats: int) -> float:
    times = []
    for _ in range(repeats + 1):
        targets, mask = next_item_targets(batch)
        safe = np.where(targets > 0, targets, 1)
        negs = sample_negatives_batch(safe, cfg.negatives, cfg.vocab, rng)
        start = time.perf_counter()
        with Tape() as tape:
            hidden = forward_hidden(batch, params, cfg)
            pos = T.reshape(T.rows_dot(hidden, params.item_emb, targets[..., None]), targets.shape)
            neg = T.rows_dot(hidden, params.item_emb, negs)
            loss = sampled_softmax_loss(pos, neg, mask)
        backward(loss, tape)
        times.append(time.perf_counter() - start)
        for t in params.tensors():
            t.grad = None
    return float(np.median(times[1:]))  # first measurement doubles as warm-up


def _linear_fit_r2(xs: np.ndarray, ys: np.ndarray) -> float:
    coeffs = np.polyfit(xs, ys, 1)
    pred = np.polyval(coeffs, xs)
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def scaling_probe(
    cfg_template: ModelConfig,
    axis: str,
    values: Sequence[int],
    batch_size: int = 8,
    seed: int = 0,
    repeats: int = 5,
) -> ProbeResult:
    """param_count and measured step time along the layers or dim axis.

    The dim axis scales d with d_h = d and d_ffn = 2d so widths stay
    proportional; param_count always reports the closed form for the probed
    config.
    """
    if axis not in ("layers", "dim"):
        raise ValueError(f"scaling_probe: unknown axis {axis!r}")
    if list(values) != sorted(values):
        raise ValueError("scaling_probe: values must be ascending")
    rows = []
    for v in values:
        if axis == "layers":
            cfg = replace(cfg_template, layers=int(v))
        else:
            cfg = replace(cfg_template, d=int(v), d_h=int(v), d_ffn=2 * int(v))
        params = init_params(cfg, "full", seed)
        batch = _fixed_batch(cfg, batch_size, seed)
        rng = np.random.default_rng(seed)
        rows.append(ProbeRow(value=int(v), param_count=param_count(cfg), step_time=_step_time(params, cfg, batch, rng, repeats)))
    xs = np.array([r.value for r in rows], dtype=float)
    ys = np.array([r.step_time for r in rows])
    return ProbeResult(axis=axis, rows=rows, r_squared=_linear_fit_r2(xs, ys))
