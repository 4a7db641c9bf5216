"""Dataset ingestion, chronological sequences, splits, batching, and a synthetic
generator with planted temporal structure."""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .model import SequenceBatch

FORMATS = ("movielens_dat", "csv")


class DataError(ValueError):
    """Malformed input data or an empty/degenerate dataset."""


@dataclass(frozen=True, slots=True)
class InteractionEvent:
    user: int
    item: int
    timestamp: int
    rating: float | None = None


@dataclass
class UserSequence:
    user: int
    items: np.ndarray       # int64, chronological
    timestamps: np.ndarray  # int64, non-decreasing
    raw_length: int = 0     # interaction count before truncation

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=np.int64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if self.raw_length == 0:
            self.raw_length = len(self.items)

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class EvalInstance:
    """One ranking task: a context and the ground-truth next item."""

    user: int
    items: np.ndarray
    timestamps: np.ndarray
    target: int


@dataclass
class SplitStats:
    users: int
    items: int
    interactions: int
    mean_length: float
    dropped_users: int


@dataclass
class DatasetSplit:
    train: list[UserSequence]
    validation: list[EvalInstance]
    test: list[EvalInstance]
    item_remap: dict[int, int] | None
    stats: SplitStats

    @property
    def vocab(self) -> int:
        # embedding rows: the padding row plus one per item
        return self.stats.items + 1


# parsing ----------------------------------------------------------------------


def _parse_movielens_line(line: str, ln: int) -> tuple[int, int, int, float]:
    parts = line.split("::")
    if len(parts) != 4:
        raise DataError(f"line {ln}: expected 4 '::'-separated fields, got {len(parts)}")
    try:
        user, item = int(parts[0]), int(parts[1])
        rating = float(parts[2])
        ts = int(parts[3])
    except ValueError as e:
        raise DataError(f"line {ln}: {e}") from None
    return user, item, ts, rating


def parse_interactions(
    path: str | Path,
    format: str,
    event_filter: Callable[[InteractionEvent], bool] | None = None,
) -> tuple[list[InteractionEvent], dict[int, int]]:
    """Read an interaction log and densely remap ids; 0 stays reserved for padding.

    Returns the remapped events in file order plus the original-item-id ->
    dense-id table. `event_filter` (on raw events) supports datasets that need
    a positive-behavior filter before sequence building.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    if format not in FORMATS:
        raise DataError(f"unknown format {format!r}; expected one of {FORMATS}")

    raw: list[InteractionEvent] = []
    with open(path, newline="") as fh:
        if format == "movielens_dat":
            for ln, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                user, item, ts, rating = _parse_movielens_line(line, ln)
                raw.append(InteractionEvent(user, item, ts, rating))
        else:
            reader = _csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError("empty file")
            cols = [c.strip().lower() for c in header]
            if cols[:3] != ["user", "item", "timestamp"]:
                raise DataError(f"line 1: expected header user,item,timestamp[,rating], got {header}")
            has_rating = len(cols) > 3 and cols[3] == "rating"
            for ln, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) < 3:
                    raise DataError(f"line {ln}: expected at least 3 fields, got {len(row)}")
                try:
                    user, item, ts = int(row[0]), int(row[1]), int(row[2])
                    rating = float(row[3]) if has_rating and len(row) > 3 and row[3] != "" else None
                except ValueError as e:
                    raise DataError(f"line {ln}: {e}") from None
                raw.append(InteractionEvent(user, item, ts, rating))

    if event_filter is not None:
        raw = [e for e in raw if event_filter(e)]
    if not raw:
        raise DataError(f"no events parsed from {path}")
    if any(e.timestamp < 0 for e in raw):
        raise DataError("negative timestamp encountered")

    item_remap = {orig: i + 1 for i, orig in enumerate(sorted({e.item for e in raw}))}
    user_remap = {orig: i + 1 for i, orig in enumerate(sorted({e.user for e in raw}))}
    events = [
        InteractionEvent(user_remap[e.user], item_remap[e.item], e.timestamp, e.rating)
        for e in raw
    ]
    return events, item_remap


# sequence construction -----------------------------------------------------------


def build_sequences(events: Sequence[InteractionEvent], n: int) -> list[UserSequence]:
    """Per-user chronological sequences; ties keep file order; at most the last n kept."""
    if not events:
        raise DataError("build_sequences: no events")
    by_user: dict[int, list[tuple[int, int]]] = {}
    for e in events:
        by_user.setdefault(e.user, []).append((e.timestamp, e.item))
    out = []
    for user in sorted(by_user):
        rows = by_user[user]
        order = sorted(range(len(rows)), key=lambda i: rows[i][0])  # stable on ties
        ts = np.array([rows[i][0] for i in order], dtype=np.int64)
        items = np.array([rows[i][1] for i in order], dtype=np.int64)
        raw_len = len(items)
        if raw_len > n:
            ts, items = ts[-n:], items[-n:]
        out.append(UserSequence(user=user, items=items, timestamps=ts, raw_length=raw_len))
    return out


def split_leave_last(
    sequences: Sequence[UserSequence],
    item_remap: dict[int, int] | None = None,
) -> DatasetSplit:
    """Last item becomes the test target, second-to-last the validation target.

    Users with fewer than 3 interactions cannot populate all three partitions
    and are dropped (counted in the stats).
    """
    train, val, test = [], [], []
    dropped = 0
    items_seen: set[int] = set()
    interactions = 0
    for seq in sequences:
        interactions += seq.raw_length
        items_seen.update(seq.items.tolist())
        if len(seq) < 3:
            dropped += 1
            continue
        train.append(
            UserSequence(seq.user, seq.items[:-2], seq.timestamps[:-2], raw_length=seq.raw_length)
        )
        val.append(EvalInstance(seq.user, seq.items[:-2], seq.timestamps[:-2], int(seq.items[-2])))
        test.append(EvalInstance(seq.user, seq.items[:-1], seq.timestamps[:-1], int(seq.items[-1])))
    if not train:
        raise DataError("split_leave_last: no users with >= 3 interactions")
    n_items = len(item_remap) if item_remap is not None else len(items_seen)
    stats = SplitStats(
        users=len(train),
        items=n_items,
        interactions=interactions,
        mean_length=interactions / len(sequences),
        dropped_users=dropped,
    )
    return DatasetSplit(train=train, validation=val, test=test, item_remap=item_remap, stats=stats)


# synthetic data -------------------------------------------------------------------


@dataclass
class GapRule:
    """Planted dynamics: the next item depends on the current item and the
    class of the most recent observed time gap."""

    gap_ranges: list[tuple[int, int]]
    next_dist: Callable[[int, int], np.ndarray]  # (current item, gap class) -> probs over items 1..I

    @property
    def classes(self) -> int:
        return len(self.gap_ranges)


def uniform_gap_rule(items: int, short=(1, 10), long=(1000, 2000)) -> GapRule:
    probs = np.full(items, 1.0 / items)
    return GapRule(gap_ranges=[short, long], next_dist=lambda cur, cls: probs)


def two_class_gap_rule(
    items: int, item_a: int = 1, item_b: int = 2, prob: float = 0.9,
    short=(1, 10), long=(1000, 2000),
) -> GapRule:
    """Short recent gap favors item_a, long favors item_b, with probability `prob`."""

    def dist(cur: int, cls: int) -> np.ndarray:
        target = item_a if cls == 0 else item_b
        p = np.full(items, (1.0 - prob) / (items - 1))
        p[target - 1] = prob
        return p

    return GapRule(gap_ranges=[short, long], next_dist=dist)


def shifted_two_class_gap_rule(
    items: int, prob: float = 0.9, short=(1, 10), long=(1000, 2000),
) -> GapRule:
    """Next item is a function of both the current item and the recent gap class,
    so neither channel alone can recover the rule."""

    def dist(cur: int, cls: int) -> np.ndarray:
        target = 1 + (2 * cur + cls) % items
        p = np.full(items, (1.0 - prob) / items)
        p[target - 1] += prob
        return p

    return GapRule(gap_ranges=[short, long], next_dist=dist)


@dataclass
class SyntheticSpec:
    users: int
    items: int
    length: int
    seed: int
    gap_rule: GapRule


def synthesize_dataset(spec: SyntheticSpec) -> list[InteractionEvent]:
    """Deterministic event log whose next-item law follows the planted gap rule."""
    if spec.users < 1 or spec.items < 2 or spec.length < 2:
        raise DataError("synthesize_dataset: degenerate spec (need users >= 1, items >= 2, length >= 2)")
    rng = np.random.default_rng(spec.seed)
    rule = spec.gap_rule
    events: list[InteractionEvent] = []
    for user in range(1, spec.users + 1):
        t = int(rng.integers(0, 1_000_000))
        current = int(rng.integers(1, spec.items + 1))
        prev_cls = int(rng.integers(rule.classes))
        events.append(InteractionEvent(user, current, t))
        for _ in range(spec.length - 1):
            probs = rule.next_dist(current, prev_cls)
            nxt = 1 + int(rng.choice(spec.items, p=probs))
            cls = int(rng.integers(rule.classes))
            lo, hi = rule.gap_ranges[cls]
            t += int(rng.integers(lo, hi + 1))
            events.append(InteractionEvent(user, nxt, t))
            current, prev_cls = nxt, cls
    return events


# batching ---------------------------------------------------------------------------


def batch_iterator(
    partition: Sequence[UserSequence],
    batch_size: int,
    n: int,
    shuffle_seed: int,
) -> Iterator[SequenceBatch]:
    """Every sequence exactly once per epoch, padded to width n, seeded order."""
    if batch_size < 1:
        raise ValueError("batch_iterator: batch_size must be >= 1")
    if not partition:
        raise DataError("batch_iterator: empty partition")
    order = np.random.default_rng(shuffle_seed).permutation(len(partition))
    for start in range(0, len(order), batch_size):
        chunk = [partition[i] for i in order[start : start + batch_size]]
        b = len(chunk)
        items = np.zeros((b, n), dtype=np.int64)
        ts = np.zeros((b, n), dtype=np.int64)
        lens = np.zeros(b, dtype=np.int64)
        for row, seq in enumerate(chunk):
            take = min(len(seq), n)
            items[row, :take] = seq.items[-take:]
            ts[row, :take] = seq.timestamps[-take:]
            lens[row] = take
        yield SequenceBatch(items, ts, lens)


def split_manifest(split: DatasetSplit) -> dict:
    """JSON-ready summary of a split, including the id remap table."""
    return {
        "stats": {
            "users": split.stats.users,
            "items": split.stats.items,
            "interactions": split.stats.interactions,
            "mean_length": split.stats.mean_length,
            "dropped_users": split.stats.dropped_users,
        },
        "partitions": {
            "train": len(split.train),
            "validation": len(split.validation),
            "test": len(split.test),
        },
        "item_remap": {str(k): v for k, v in (split.item_remap or {}).items()},
    }
