import csv
import json

from fuxi_alpha.cli import main


def _fast_overrides(outdir, **extra):
    base = {
        "data.n": 10,
        "data.synthetic.users": 30,
        "data.synthetic.items": 10,
        "data.synthetic.length": 10,
        "model.d": 8,
        "model.d_h": 8,
        "model.d_ffn": 16,
        "model.layers": 1,
        "model.n_buckets": 8,
        "model.negatives": 4,
        "train.epochs": 1,
        "train.batch_size": 8,
        "eval.ks": "[5, 10]",
        "output.directory": str(outdir),
    }
    base.update(extra)
    return [arg for k, v in base.items() for arg in ("--set", f"{k}={v}")]


def test_unknown_config_key_exits_2(tmp_path, capsys):
    code = main(["ingest", "--set", "model.width=4", "--set", f"output.directory={tmp_path}"])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config"
    assert "model.width" in err["message"]


def test_invalid_json_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "conf.json"
    bad.write_text("{not json")
    assert main(["ingest", "--config", str(bad)]) == 2


def test_missing_data_file_exits_3(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(
        ["ingest", "--set", "data.format=csv", "--set", "data.path=/nonexistent.csv",
         "--set", f"output.directory={out}"]
    )
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "data"


def test_locked_output_directory_exits_2(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    (out / ".lock").write_text("held")
    assert main(["ingest"] + _fast_overrides(out)) == 2
    (out / ".lock").unlink()
    assert main(["ingest"] + _fast_overrides(out)) == 0
    assert not (out / ".lock").exists()  # released after the run


def test_ingest_writes_manifest(tmp_path):
    out = tmp_path / "run"
    assert main(["ingest"] + _fast_overrides(out)) == 0
    manifest = json.loads((out / "split.manifest").read_text())
    assert manifest["stats"]["users"] == 30
    assert manifest["partitions"]["test"] == 30
    assert (out / "resolved_config.json").exists()
    assert (out / "run_manifest.json").exists()


def test_train_then_eval_produces_artifacts(tmp_path):
    out = tmp_path / "run"
    assert main(["train"] + _fast_overrides(out)) == 0
    assert (out / "checkpoint.bin").exists()
    with open(out / "loss.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "mean_loss", "val_ndcg10"]
    assert len(rows) == 2  # header + one epoch

    assert main(["eval"] + _fast_overrides(out)) == 0
    with open(out / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["variant", "epoch", "k", "metric", "value"]
    metrics = {(r[2], r[3]) for r in rows[1:]}
    assert ("5", "hr") in metrics and ("10", "ndcg") in metrics and ("", "mrr") in metrics


def test_ablate_writes_one_row_per_variant(tmp_path):
    out = tmp_path / "run"
    assert main(["ablate"] + _fast_overrides(out, **{"data.synthetic.users": 20})) == 0
    with open(out / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "variant"
    assert [r[0] for r in rows[1:]] == ["full", "no_ams", "no_mffn", "base"]
    assert len(rows) == 5


def test_bench_writes_tps_rows(tmp_path):
    out = tmp_path / "run"
    overrides = _fast_overrides(
        out,
        **{
            "bench.seq_lengths": "[6, 12]",
            "bench.batch": 2,
            "bench.users": 6,
            "bench.items": 10,
            "bench.variants": '["vanilla", "full"]',
            "model.negatives": 3,
        },
    )
    assert main(["bench"] + overrides) == 0
    with open(out / "bench.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["variant", "seq_len", "metric", "value", "machine"]
    assert len(rows) == 1 + 2 * 2
    assert all(float(r[3]) > 0 for r in rows[1:])


def test_analyze_writes_oracle_and_scaling_rows(tmp_path):
    out = tmp_path / "run"
    assert main(["analyze"] + _fast_overrides(out)) == 0
    with open(out / "analysis.csv") as fh:
        rows = list(csv.reader(fh))
    holds = [r for r in rows if r[0] == "degree_oracle" and r[2] == "holds"]
    assert len(holds) == 8 and all(r[3] == "1" for r in holds)
    assert any(r[0] == "scaling_layers" and r[2] == "r_squared" for r in rows)


def test_gradcheck_passes_and_reports(tmp_path):
    out = tmp_path / "run"
    assert main(["gradcheck"] + _fast_overrides(out)) == 0
    text = (out / "gradcheck.txt").read_text()
    assert "max over seeds" in text


def test_train_eval_determinism_quick(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    blobs = []
    for out in outs:
        assert main(["train"] + _fast_overrides(out)) == 0
        assert main(["eval"] + _fast_overrides(out)) == 0
        blobs.append(
            ((out / "checkpoint.bin").read_bytes(), (out / "metrics.csv").read_bytes())
        )
    assert blobs[0] == blobs[1]
