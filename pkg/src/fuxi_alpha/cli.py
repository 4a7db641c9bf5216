"""Command-line entry point.

    fuxi-alpha <command> [--config run.json] [--set key=value ...]

Commands: ingest, train, eval, ablate, bench, analyze, gradcheck. Artifacts
land in output.directory under fixed names (split.manifest, checkpoint.bin,
loss.csv, metrics.csv, bench.csv, analysis.csv, gradcheck.txt). Exit codes:
0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import tensor as T
from .baselines import VariantSpec
from .bench import scaling_probe, tps_benchmark
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, resolve_config
from .data import (
    DataError,
    SyntheticSpec,
    build_sequences,
    parse_interactions,
    shifted_two_class_gap_rule,
    split_leave_last,
    split_manifest,
    synthesize_dataset,
    two_class_gap_rule,
    uniform_gap_rule,
)
from .evaluate import evaluate, metrics_records, write_metrics_csv
from .model import ModelConfig, SequenceBatch, forward_hidden, init_params, sampled_softmax_loss
from .poly import generic_block_spec, verify_degree_bound
from .train import TrainConfig, sample_negatives_batch, train

COMMANDS = ("ingest", "train", "eval", "ablate", "bench", "analyze", "gradcheck")

ABLATION_KINDS = ("full", "no_ams", "no_mffn", "base")

GRADCHECK_TOLERANCE = 1e-4


def _error_record(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def load_split(cfg: dict):
    data = cfg["data"]
    if data["format"] == "synthetic":
        syn = data["synthetic"]
        items = syn["items"]
        rules = {
            "uniform": lambda: uniform_gap_rule(items),
            "two_class": lambda: two_class_gap_rule(items, prob=syn["prob"]),
            "shifted_two_class": lambda: shifted_two_class_gap_rule(items, prob=syn["prob"]),
        }
        if syn["rule"] not in rules:
            raise ConfigError([f"data.synthetic.rule: unknown rule {syn['rule']!r}"])
        spec = SyntheticSpec(
            users=syn["users"], items=items, length=syn["length"], seed=syn["seed"],
            gap_rule=rules[syn["rule"]](),
        )
        events = synthesize_dataset(spec)
        remap = None
    else:
        events, remap = parse_interactions(data["path"], data["format"])
    return split_leave_last(build_sequences(events, data["n"]), remap)


def build_model_config(cfg: dict, vocab: int) -> ModelConfig:
    m = cfg["model"]
    return ModelConfig(
        vocab=vocab,
        d=m["d"],
        d_h=m["d_h"],
        heads=m["heads"],
        d_ffn=m["d_ffn"],
        layers=m["layers"],
        n=cfg["data"]["n"],
        n_buckets=m["n_buckets"],
        negatives=m["negatives"],
        time_bucket_base=m["time_bucket_base"],
        max_time_span=m["max_time_span"],
        rms_eps=m["rms_eps"],
    )


def build_train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        lr=t["lr"], weight_decay=t["weight_decay"], beta1=t["beta1"], beta2=t["beta2"],
        adam_eps=t["adam_eps"], epochs=t["epochs"], batch_size=t["batch_size"],
        seed=t["seed"], eval_every=t["eval_every"], patience=t["patience"],
    )


# commands -----------------------------------------------------------------------


def cmd_ingest(cfg: dict, outdir: Path) -> int:
    split = load_split(cfg)
    (outdir / "split.manifest").write_text(json.dumps(split_manifest(split), indent=2))
    return 0


def _write_loss_csv(path: Path, result) -> None:
    val = dict(result.val_history)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "val_ndcg10"])
        for epoch, loss in enumerate(result.loss_history):
            writer.writerow([epoch, repr(loss), repr(val[epoch]) if epoch in val else ""])


def cmd_train(cfg: dict, outdir: Path) -> int:
    split = load_split(cfg)
    mcfg = build_model_config(cfg, split.vocab)
    tcfg = build_train_config(cfg)
    variant = VariantSpec(cfg["model"]["variant"])
    result = train(variant, split, tcfg, mcfg)
    save_checkpoint(
        outdir / "checkpoint.bin", result.params, mcfg,
        extra={"variant": variant.kind, "seed": tcfg.seed, "best_epoch": result.best_epoch},
    )
    _write_loss_csv(outdir / "loss.csv", result)
    return 0


def cmd_eval(cfg: dict, outdir: Path) -> int:
    split = load_split(cfg)
    params, mcfg, extra = load_checkpoint(outdir / "checkpoint.bin")
    partition = split.test if cfg["eval"]["partition"] == "test" else split.validation
    report = evaluate(params, partition, cfg["eval"]["ks"], mcfg)
    rows = metrics_records(report, extra.get("variant", params.kind), "final")
    write_metrics_csv(outdir / "metrics.csv", rows)
    return 0


def cmd_ablate(cfg: dict, outdir: Path) -> int:
    split = load_split(cfg)
    mcfg = build_model_config(cfg, split.vocab)
    tcfg = build_train_config(cfg)
    ks = sorted(cfg["eval"]["ks"])
    header = ["variant"] + [f"hr@{k}" for k in ks] + [f"ndcg@{k}" for k in ks] + ["mrr"]
    rows = []
    for kind in ABLATION_KINDS:
        result = train(VariantSpec(kind), split, tcfg, mcfg)
        report = evaluate(result.params, split.test, ks, mcfg)
        rows.append(
            [kind]
            + [repr(report.hr[k]) for k in ks]
            + [repr(report.ndcg[k]) for k in ks]
            + [repr(report.mrr)]
        )
    with open(outdir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return 0


def cmd_bench(cfg: dict, outdir: Path) -> int:
    b = cfg["bench"]
    lengths = b["seq_lengths"]
    items = b["items"]
    spec = SyntheticSpec(
        users=b["users"], items=items, length=max(lengths), seed=11,
        gap_rule=uniform_gap_rule(items),
    )
    dataset = build_sequences(synthesize_dataset(spec), n=max(lengths))
    template = build_model_config(cfg, vocab=items + 1)
    machine = platform.node() or platform.machine()
    with open(outdir / "bench.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seq_len", "metric", "value", "machine"])
        for kind in b["variants"]:
            VariantSpec(kind)
            for rec in tps_benchmark(kind, template, lengths, b["batch"], dataset):
                writer.writerow([rec.variant, rec.seq_len, "tps", repr(rec.tps), machine])
    return 0


def cmd_analyze(cfg: dict, outdir: Path) -> int:
    rows = []
    all_hold = True
    for layers in (1, 2, 3, 4):
        for n in (2, 3):
            report = verify_degree_bound(generic_block_spec(layers, n))
            expected = 2**layers - 1
            ok = report.holds and report.divisibility and report.max_degree == expected
            all_hold &= ok
            rows.append(["degree_oracle", f"b={layers},n={n}", "max_degree", report.max_degree, ""])
            rows.append(["degree_oracle", f"b={layers},n={n}", "holds", int(ok), ""])
    template = ModelConfig(
        vocab=200, d=16, d_h=16, heads=1, d_ffn=32, layers=1, n=64,
        n_buckets=32, negatives=16,
    )
    machine = platform.node() or platform.machine()
    for axis, values in (("layers", [1, 2, 4]), ("dim", [8, 16])):
        probe = scaling_probe(template, axis, values)
        for row in probe.rows:
            rows.append([f"scaling_{axis}", row.value, "param_count", row.param_count, machine])
            rows.append([f"scaling_{axis}", row.value, "step_time", repr(row.step_time), machine])
        rows.append([f"scaling_{axis}", "", "r_squared", repr(probe.r_squared), machine])
    with open(outdir / "analysis.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["probe", "value", "metric", "result", "machine"])
        writer.writerows(rows)
    if not all_hold:
        raise RuntimeError("analyze: polynomial degree oracle failed")
    return 0


def _gradcheck_loss(params, cfg, batch, targets, mask, negs):
    hidden = forward_hidden(batch, params, cfg)
    pos = T.reshape(T.rows_dot(hidden, params.item_emb, targets[..., None]), targets.shape)
    neg = T.rows_dot(hidden, params.item_emb, negs)
    return sampled_softmax_loss(pos, neg, mask)


def cmd_gradcheck(cfg: dict, outdir: Path) -> int:
    tiny = ModelConfig(vocab=7, d=4, d_h=4, heads=1, d_ffn=8, layers=2, n=4, n_buckets=8, negatives=2)
    lines = []
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        params = init_params(tiny, "full", seed)
        for _, t in params.named():
            t.data = rng.normal(0.0, 0.3, size=t.data.shape)
        params.item_emb.data[0, :] = 0.0
        items = np.array([[1 + seed % 6, 2, 5, 3]], dtype=np.int64)
        ts = np.array([[3, 9, 12, 40]], dtype=np.int64)
        batch = SequenceBatch(items, ts, np.array([4]))
        targets = np.array([[2, 5, 3, 0]], dtype=np.int64)
        mask = (targets > 0).astype(float)
        negs = sample_negatives_batch(np.where(targets > 0, targets, 1), tiny.negatives, tiny.vocab, rng)
        err = T.grad_check_params(
            lambda: _gradcheck_loss(params, tiny, batch, targets, mask, negs),
            params.tensors(),
            fd_step=1e-5,
        )
        worst = max(worst, err)
        lines.append(f"seed {seed}: max relative error {err:.3e}")
    lines.append(f"max over seeds: {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})")
    (outdir / "gradcheck.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    if worst >= GRADCHECK_TOLERANCE:
        raise RuntimeError(f"gradcheck: max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE}")
    return 0


DISPATCH = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "bench": cmd_bench,
    "analyze": cmd_analyze,
    "gradcheck": cmd_gradcheck,
}


def _write_provenance(cfg: dict, outdir: Path, command: str, overrides) -> None:
    (outdir / "resolved_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))
    manifest = {
        "command": command,
        "overrides": list(overrides),
        "train_seed": cfg["train"]["seed"],
        "data_seed": cfg["data"]["synthetic"]["seed"],
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "machine": platform.node() or platform.machine(),
    }
    (outdir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fuxi-alpha", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to a JSON run configuration")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="dotted-path override, e.g. model.layers=4 (repeatable)",
    )
    args = parser.parse_args(argv)

    try:
        document = json.loads(Path(args.config).read_text()) if args.config else {}
    except FileNotFoundError:
        _error_record("config", f"config file not found: {args.config}")
        return 2
    except json.JSONDecodeError as e:
        _error_record("config", f"config file is not valid JSON: {e}")
        return 2

    try:
        cfg = resolve_config(document, args.overrides)
    except ConfigError as e:
        _error_record("config", str(e))
        return 2

    outdir = Path(cfg["output"]["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    lock = outdir / ".lock"
    try:
        lock_fd = open(lock, "x")
    except FileExistsError:
        _error_record("config", f"output directory {outdir} is locked by another run")
        return 2

    try:
        _write_provenance(cfg, outdir, args.command, args.overrides)
        return DISPATCH[args.command](cfg, outdir)
    except ConfigError as e:
        _error_record("config", str(e))
        return 2
    except (DataError, CheckpointError, FileNotFoundError) as e:
        _error_record("data", str(e))
        return 3
    except (RuntimeError, ArithmeticError, ValueError) as e:
        _error_record("numeric", str(e))
        return 4
    finally:
        lock_fd.close()
        lock.unlink(missing_ok=True)


if __name__ == "__main__":
    sys.exit(main())
