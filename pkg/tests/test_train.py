import numpy as np
import pytest
from conftest import tiny_config

from fuxi_alpha.data import SyntheticSpec, build_sequences, split_leave_last, synthesize_dataset, two_class_gap_rule
from fuxi_alpha.model import init_params
from fuxi_alpha.train import TrainConfig, sample_negatives, sample_negatives_batch, train

# chi2.isf(0.01, 97): frozen critical value for the uniformity test below
CHI2_CRIT_DOF97_P01 = 132.30887667181258


def _toy_split(users=20, items=8, length=12, seed=0):
    spec = SyntheticSpec(users=users, items=items, length=length, seed=seed,
                         gap_rule=two_class_gap_rule(items, prob=0.9))
    events = synthesize_dataset(spec)
    return split_leave_last(build_sequences(events, n=length))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_zero_epochs_returns_initialization_bitwise():
    split = _toy_split()
    cfg = tiny_config(vocab=split.vocab, n=12, negatives=3)
    tcfg = TrainConfig(epochs=0, seed=7)
    result = train("full", split, tcfg, cfg)
    reference = init_params(cfg, "full", seed=7)
    for (_, a), (_, b) in zip(result.params.named(), reference.named()):
        np.testing.assert_array_equal(a.data, b.data)


def test_same_seed_reproduces_history_and_params():
    split = _toy_split()
    cfg = tiny_config(vocab=split.vocab, n=12, negatives=4)
    tcfg = TrainConfig(epochs=2, batch_size=8, seed=3, patience=0)
    r1 = train("full", split, tcfg, cfg)
    r2 = train("full", split, tcfg, cfg)
    assert r1.loss_history == r2.loss_history
    for (_, a), (_, b) in zip(r1.params.named(), r2.params.named()):
        np.testing.assert_array_equal(a.data, b.data)


def test_loss_decreases_on_deterministic_toy():
    split = _toy_split(users=20, items=8, length=12)
    cfg = tiny_config(vocab=split.vocab, n=12, negatives=4, layers=1, d=8, d_h=8, d_ffn=16)
    tcfg = TrainConfig(epochs=5, batch_size=8, seed=0, patience=0)
    result = train("full", split, tcfg, cfg)
    assert result.loss_history[-1] < result.loss_history[0]


def test_padding_row_stays_zero_after_training():
    split = _toy_split()
    cfg = tiny_config(vocab=split.vocab, n=12, negatives=3)
    result = train("full", split, TrainConfig(epochs=2, batch_size=8, seed=1), cfg)
    np.testing.assert_array_equal(result.params.item_emb.data[0], np.zeros(cfg.d))


def test_non_finite_loss_aborts_with_diagnostic():
    split = _toy_split()
    cfg = tiny_config(vocab=split.vocab, n=12, negatives=3)
    poisoned = init_params(cfg, "full", seed=0)
    poisoned.item_emb.data[1:] = 1e200
    with np.errstate(all="ignore"), pytest.raises(RuntimeError, match="non-finite"):
        train("full", split, TrainConfig(epochs=1, batch_size=8, seed=0), cfg, initial_params=poisoned)


def test_freeze_temporal_keeps_alpha_zero():
    split = _toy_split()
    cfg = tiny_config(vocab=split.vocab, n=12, negatives=3)
    result = train("full", split, TrainConfig(epochs=2, batch_size=8, seed=0), cfg, freeze_temporal=True)
    for blk in result.params.blocks:
        for a in blk.alpha:
            np.testing.assert_array_equal(a.data, np.zeros_like(a.data))


def test_early_stopping_restores_best_params():
    split = _toy_split(users=24)
    cfg = tiny_config(vocab=split.vocab, n=12, negatives=3, layers=1)
    tcfg = TrainConfig(epochs=6, batch_size=8, seed=2, eval_every=1, patience=2)
    result = train("full", split, tcfg, cfg)
    assert result.val_history  # validation ran
    assert result.best_epoch is not None
    best = max(v for _, v in result.val_history)
    assert result.val_history[result.best_epoch // tcfg.eval_every][1] == best


# negative sampling ------------------------------------------------------------


def test_forced_negative_with_tiny_vocab():
    rng = np.random.default_rng(0)
    for _ in range(50):
        out = sample_negatives(positive=1, n_neg=1, vocab=3, rng=rng)
        assert list(out) == [2]


def test_negatives_exclude_positive_and_stay_in_range():
    rng = np.random.default_rng(1)
    pos = np.full(20_000, 17)
    out = sample_negatives_batch(pos, 5, vocab=100, rng=rng)
    assert out.shape == (20_000, 5)
    assert not np.any(out == 17)
    assert out.min() >= 1 and out.max() <= 99


def test_negatives_distinct_within_position():
    rng = np.random.default_rng(2)
    out = sample_negatives_batch(np.arange(1, 200), 40, vocab=64, rng=rng)
    for row in out:
        assert len(set(row.tolist())) == 40


def test_negatives_chi_square_uniformity():
    # 1e5 draws over the 98 allowed ids of a 100-item vocab
    rng = np.random.default_rng(3)
    pos = np.full(20_000, 17)
    out = sample_negatives_batch(pos, 5, vocab=100, rng=rng).ravel()
    values = np.arange(1, 100)
    values = values[values != 17]
    counts = np.array([(out == v).sum() for v in values])
    expected = out.size / values.size
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert stat < CHI2_CRIT_DOF97_P01


def test_negatives_reject_oversized_n():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_negatives(positive=1, n_neg=4, vocab=5, rng=rng)
