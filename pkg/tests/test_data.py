import os
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from fuxi_alpha.data import (
    DataError,
    InteractionEvent,
    SyntheticSpec,
    batch_iterator,
    build_sequences,
    parse_interactions,
    split_leave_last,
    synthesize_dataset,
    two_class_gap_rule,
    uniform_gap_rule,
)

SAMPLE = Path(__file__).parent / "data" / "sample.dat"

ML1M_PATH = os.environ.get("FUXI_ML1M", "data/ml-1m/ratings.dat")


def test_parse_movielens_sample_file():
    events, remap = parse_interactions(SAMPLE, "movielens_dat")
    assert len(events) == 8
    # original ids remap densely onto [1, |I|], 0 reserved for padding
    assert sorted(remap.values()) == list(range(1, 8))
    first = events[0]
    assert first.user == 1  # user 1 sorts first
    assert first.item == remap[1193]
    assert first.rating == 5.0
    assert first.timestamp == 978300760
    assert min(remap.values()) == 1


def test_parse_is_idempotent():
    a, ra = parse_interactions(SAMPLE, "movielens_dat")
    b, rb = parse_interactions(SAMPLE, "movielens_dat")
    assert a == b and ra == rb


def test_parse_rejects_malformed_line(tmp_path):
    p = tmp_path / "bad.dat"
    p.write_text("1::2::3::4\n5::6::7\n")
    with pytest.raises(DataError) as exc:
        parse_interactions(p, "movielens_dat")
    assert "line 2" in str(exc.value)


def test_parse_rejects_empty_file(tmp_path):
    p = tmp_path / "empty.dat"
    p.write_text("")
    with pytest.raises(DataError):
        parse_interactions(p, "movielens_dat")


def test_parse_csv_format(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("user,item,timestamp,rating\n9,100,50,4.5\n9,200,60\n7,100,10\n")
    events, remap = parse_interactions(p, "csv")
    assert len(events) == 3
    assert events[2].user == 1  # user 7 sorts before user 9
    assert events[0].rating == 4.5 and events[1].rating is None
    assert set(remap.keys()) == {100, 200}


def test_parse_event_filter(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("user,item,timestamp,rating\n1,10,5,1.0\n1,20,6,5.0\n2,10,7,4.0\n")
    events, _ = parse_interactions(p, "csv", event_filter=lambda e: (e.rating or 0) >= 4.0)
    assert len(events) == 2


def test_parse_unknown_format():
    with pytest.raises(DataError):
        parse_interactions(SAMPLE, "parquet")


@pytest.mark.skipif(not Path(ML1M_PATH).exists(), reason="MovieLens-1M not present")
def test_movielens_1m_ingest_statistics():
    events, remap = parse_interactions(ML1M_PATH, "movielens_dat")
    assert len(events) == 1_000_209
    assert len(remap) == 3_706
    seqs = build_sequences(events, n=10**9)
    assert len(seqs) == 6_040
    mean_len = sum(s.raw_length for s in seqs) / len(seqs)
    assert abs(mean_len - 165.60) < 0.01


def test_build_sequences_sorts_by_timestamp():
    events = [
        InteractionEvent(1, 3, 50),
        InteractionEvent(1, 1, 10),
        InteractionEvent(1, 2, 30),
    ]
    seqs = build_sequences(events, n=10)
    assert list(seqs[0].items) == [1, 2, 3]
    assert list(seqs[0].timestamps) == [10, 30, 50]


def test_build_sequences_stable_on_timestamp_ties():
    events = [
        InteractionEvent(1, 7, 10),
        InteractionEvent(1, 8, 10),
        InteractionEvent(1, 9, 10),
    ]
    seqs = build_sequences(events, n=10)
    assert list(seqs[0].items) == [7, 8, 9]  # file order preserved


def test_build_sequences_truncates_to_most_recent():
    events = [InteractionEvent(1, i + 1, 10 * i) for i in range(9)]  # n + 5 with n = 4
    seqs = build_sequences(events, n=4)
    assert list(seqs[0].items) == [6, 7, 8, 9]
    assert seqs[0].raw_length == 9


def test_split_leave_last_rule():
    events = [InteractionEvent(1, item, t) for item, t in [(5, 1), (6, 2), (7, 3), (8, 4)]]
    split = split_leave_last(build_sequences(events, n=10))
    assert list(split.train[0].items) == [5, 6]
    assert list(split.validation[0].items) == [5, 6] and split.validation[0].target == 7
    assert list(split.test[0].items) == [5, 6, 7] and split.test[0].target == 8


def test_split_drops_short_users_and_counts_them():
    events = [
        InteractionEvent(1, 1, 1),
        InteractionEvent(1, 2, 2),  # only 2 interactions: dropped
        InteractionEvent(2, 1, 1),
        InteractionEvent(2, 2, 2),
        InteractionEvent(2, 3, 3),
    ]
    split = split_leave_last(build_sequences(events, n=10))
    assert split.stats.dropped_users == 1
    assert split.stats.users == 1


def test_split_rejects_all_short():
    events = [InteractionEvent(1, 1, 1), InteractionEvent(1, 2, 2)]
    with pytest.raises(DataError):
        split_leave_last(build_sequences(events, n=10))


def test_split_partitions_100_user_synthetic_exhaustively():
    spec = SyntheticSpec(users=100, items=12, length=8, seed=3, gap_rule=uniform_gap_rule(12))
    events = synthesize_dataset(spec)
    seqs = build_sequences(events, n=20)
    split = split_leave_last(seqs)
    assert len(split.train) == len(split.validation) == len(split.test) == 100
    for seq, tr, va, te in zip(seqs, split.train, split.validation, split.test):
        assert list(tr.items) == list(seq.items[:-2])
        assert va.target == seq.items[-2] and list(va.items) == list(seq.items[:-2])
        assert te.target == seq.items[-1] and list(te.items) == list(seq.items[:-1])
        # the two held-out targets never appear as training targets
        assert len(tr.items) + 2 == len(seq.items)


def test_synthetic_deterministic_for_seed():
    spec = SyntheticSpec(users=5, items=6, length=10, seed=42, gap_rule=uniform_gap_rule(6))
    assert synthesize_dataset(spec) == synthesize_dataset(spec)


def test_synthetic_rejects_degenerate_spec():
    with pytest.raises(DataError):
        synthesize_dataset(SyntheticSpec(users=0, items=5, length=5, seed=0, gap_rule=uniform_gap_rule(5)))


def _observable_draws(events):
    """(gap class, next item) pairs recoverable from the emitted log."""
    by_user = {}
    for e in events:
        by_user.setdefault(e.user, []).append(e)
    for seq in by_user.values():
        for i in range(1, len(seq) - 1):
            gap = seq[i].timestamp - seq[i - 1].timestamp
            cls = 0 if gap <= 10 else 1
            yield cls, seq[i + 1].item


def test_synthetic_uniform_rule_yields_uniform_next_items():
    items = 8
    spec = SyntheticSpec(users=60, items=items, length=40, seed=1, gap_rule=uniform_gap_rule(items))
    events = synthesize_dataset(spec)
    counts = Counter(item for _, item in _observable_draws(events))
    total = sum(counts.values())
    for item in range(1, items + 1):
        assert abs(counts[item] / total - 1.0 / items) < 0.05


def test_synthetic_two_class_rule_frequencies():
    items = 10
    rule = two_class_gap_rule(items, item_a=3, item_b=7, prob=0.9)
    spec = SyntheticSpec(users=60, items=items, length=40, seed=2, gap_rule=rule)
    events = synthesize_dataset(spec)
    per_class = {0: Counter(), 1: Counter()}
    for cls, item in _observable_draws(events):
        per_class[cls][item] += 1
    for cls, favored in ((0, 3), (1, 7)):
        total = sum(per_class[cls].values())
        assert total >= 1000
        assert abs(per_class[cls][favored] / total - 0.9) < 0.05


def test_batch_iterator_sizes_and_multiset():
    spec = SyntheticSpec(users=10, items=5, length=6, seed=0, gap_rule=uniform_gap_rule(5))
    seqs = build_sequences(synthesize_dataset(spec), n=6)
    batches = list(batch_iterator(seqs, batch_size=4, n=6, shuffle_seed=9))
    assert [b.size for b in batches] == [4, 4, 2]
    seen = Counter()
    for b in batches:
        for row in range(b.size):
            length = int(b.valid_len[row])
            seen[tuple(b.items[row, :length])] += 1
    expected = Counter(tuple(s.items) for s in seqs)
    assert seen == expected


def test_batch_iterator_deterministic_order():
    spec = SyntheticSpec(users=12, items=5, length=5, seed=0, gap_rule=uniform_gap_rule(5))
    seqs = build_sequences(synthesize_dataset(spec), n=5)
    a = [b.items.copy() for b in batch_iterator(seqs, 5, 5, shuffle_seed=4)]
    b = [b.items.copy() for b in batch_iterator(seqs, 5, 5, shuffle_seed=4)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_batch_iterator_rejects_bad_args():
    spec = SyntheticSpec(users=3, items=5, length=5, seed=0, gap_rule=uniform_gap_rule(5))
    seqs = build_sequences(synthesize_dataset(spec), n=5)
    with pytest.raises(ValueError):
        list(batch_iterator(seqs, 0, 5, 0))
    with pytest.raises(DataError):
        list(batch_iterator([], 2, 5, 0))


def test_remapped_ids_contiguous():
    events, remap = parse_interactions(SAMPLE, "movielens_dat")
    ids = {e.item for e in events}
    assert ids == set(range(1, len(remap) + 1))
    assert 0 not in ids
