"""Full-catalog ranking evaluation: hit ratio, NDCG, and mean reciprocal rank."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import EvalInstance
from .model import ModelConfig, ModelParams, SequenceBatch, forward_hidden


@dataclass
class MetricsReport:
    hr: dict[int, float]
    ndcg: dict[int, float]
    mrr: float
    user_count: int
    ranks: np.ndarray | None = None


def rank_of_target(logits_row: np.ndarray, target: int, excluded: Iterable[int] = ()) -> int:
    """1-based rank of the target; ties count against it (conservative)."""
    logits_row = np.asarray(logits_row)
    excluded = list(excluded)
    if not 0 <= target < logits_row.shape[0]:
        raise ValueError(f"rank_of_target: target {target} out of range")
    if target in excluded:
        raise ValueError(f"rank_of_target: target {target} is excluded")
    keep = np.ones(logits_row.shape[0], dtype=bool)
    if excluded:
        keep[excluded] = False
    ge = (logits_row >= logits_row[target]) & keep
    return int(ge.sum())


def compute_metrics(ranks: Sequence[int], ks: Sequence[int]) -> MetricsReport:
    """Aggregate 1-based ranks into HR@K, NDCG@K and MRR."""
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        raise ValueError("compute_metrics: no ranks")
    if np.any(ranks < 1):
        raise ValueError("compute_metrics: ranks must be >= 1")
    hr = {k: float(np.mean(ranks <= k)) for k in ks}
    ndcg = {
        k: float(np.mean(np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0))) for k in ks
    }
    mrr = float(np.mean(1.0 / ranks))
    return MetricsReport(hr=hr, ndcg=ndcg, mrr=mrr, user_count=int(ranks.size), ranks=ranks)


def evaluate(
    params: ModelParams,
    instances: Sequence[EvalInstance],
    ks: Sequence[int],
    cfg: ModelConfig,
    batch_size: int = 256,
    excluded: Iterable[int] = (),
) -> MetricsReport:
    """Rank each instance's ground-truth target against the full catalog.

    The padding item is always excluded; additional ids may be excluded as
    long as no instance's target is among them.
    """
    if not instances:
        raise ValueError("evaluate: empty partition")
    excluded = list(excluded)
    ranks = np.empty(len(instances), dtype=np.int64)
    for start in range(0, len(instances), batch_size):
        chunk = instances[start : start + batch_size]
        b = len(chunk)
        items = np.zeros((b, cfg.n), dtype=np.int64)
        ts = np.zeros((b, cfg.n), dtype=np.int64)
        lens = np.zeros(b, dtype=np.int64)
        targets = np.zeros(b, dtype=np.int64)
        for row, inst in enumerate(chunk):
            take = min(len(inst.items), cfg.n)
            items[row, :take] = inst.items[-take:]
            ts[row, :take] = inst.timestamps[-take:]
            lens[row] = take
            targets[row] = inst.target
        batch = SequenceBatch(items, ts, lens)
        hidden = forward_hidden(batch, params, cfg).data
        last = hidden[np.arange(b), lens - 1]
        logits = last @ params.item_emb.data.T
        keep = np.ones(cfg.vocab, dtype=bool)
        keep[0] = False
        if excluded:
            keep[excluded] = False
        if np.any(~keep[targets]):
            raise ValueError("evaluate: an instance's target is excluded from ranking")
        tvals = logits[np.arange(b), targets]
        ge = (logits >= tvals[:, None]) & keep[None, :]
        ranks[start : start + b] = ge.sum(axis=1)
    return compute_metrics(ranks, ks)


def metrics_records(report: MetricsReport, variant: str, epoch: int | str) -> list[tuple]:
    """Flat (variant, epoch, K, metric, value) rows for the long-form CSV."""
    rows = []
    for k in sorted(report.hr):
        rows.append((variant, epoch, k, "hr", report.hr[k]))
        rows.append((variant, epoch, k, "ndcg", report.ndcg[k]))
    rows.append((variant, epoch, "", "mrr", report.mrr))
    return rows


def write_metrics_csv(path: str | Path, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "epoch", "k", "metric", "value"])
        writer.writerows(rows)
