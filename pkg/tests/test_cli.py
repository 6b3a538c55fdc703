import csv
import json

import numpy as np
import pytest

from otter.cli import UsageError, load_sweep, main
from otter.trainer import load_checkpoint


@pytest.fixture
def data(tmp_path):
    path = tmp_path / "train.bin"
    assert main(["gen-data", "--concepts", "4", "--per-concept", "16", "--d-img", "6", "--d-txt", "6", "--out", str(path)]) == 0
    return path


def run_train(tmp_path, data, *extra):
    out = tmp_path / "run"
    code = main(["train", "--data", str(data), "--out", str(out), "--batch-size", "16", "--epochs", "1", "--d-emb", "4", *extra])
    return code, out


def test_train_writes_checkpoint_log_and_manifest(tmp_path, data):
    code, out = run_train(tmp_path, data)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["artifacts"]) == {"checkpoint.json", "train_log.csv"}
    assert manifest["command"] == "train" and manifest["seeds"] == [0]
    _, cfg = load_checkpoint(out / "checkpoint.json")
    assert cfg.method == "otter" and cfg.alpha == 0.5 and cfg.use_ema_teacher


def test_label_smoothing_default_alpha(tmp_path, data):
    code, out = run_train(tmp_path, data, "--method", "ls")
    assert code == 0
    assert load_checkpoint(out / "checkpoint.json")[1].alpha == 0.9


def test_no_ema_flag(tmp_path, data):
    code, out = run_train(tmp_path, data, "--no-ema")
    assert code == 0
    assert not load_checkpoint(out / "checkpoint.json")[1].use_ema_teacher


def test_usage_errors_exit_one(tmp_path, data):
    assert main(["train", "--data", str(data)]) == 1
    assert main(["train", "--data", str(data), "--out", str(tmp_path / "x"), "--alpha", "1.5"]) == 1
    assert main(["train", "--data", str(tmp_path / "missing.bin"), "--out", str(tmp_path / "x")]) == 1
    assert main(["frobnicate"]) == 1


def test_eval_and_k_too_large(tmp_path, data):
    _, run = run_train(tmp_path, data)
    ck = str(run / "checkpoint.json")
    assert main(["eval", "--checkpoint", ck, "--data", str(data), "--k", "1,2", "--out", str(tmp_path / "ev")]) == 0
    report = json.loads((tmp_path / "ev" / "eval_report.json").read_text())
    assert set(report["flat_hit_at"]) == {"1", "2"}
    assert report["flat_hit_at"]["2"] >= report["flat_hit_at"]["1"]
    assert main(["eval", "--checkpoint", ck, "--data", str(data), "--out", str(tmp_path / "ev2")]) == 1


def test_sinkhorn_command(tmp_path):
    m = tmp_path / "s.csv"
    m.write_text("-100,1\n1,-100\n")
    out = tmp_path / "plan.csv"
    assert main(["sinkhorn", "--matrix", str(m), "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["c0", "c1"]
    assert float(rows[1][1]) == pytest.approx(1.0, abs=1e-12)


def test_numeric_error_exit_two(tmp_path):
    m = tmp_path / "s.txt"
    m.write_text("0 nan\n0 0\n")
    assert main(["sinkhorn", "--matrix", str(m), "--out", str(tmp_path / "p.csv")]) == 2


def test_sweep_dedupes_and_rejects_empty(tmp_path, data, caplog):
    sweep = tmp_path / "sweep.json"
    base = {"batch_size": 16, "epochs": 1, "d_emb": 4}
    sweep.write_text(json.dumps({"base": base, "runs": [{"method": "kd"}, {"method": "kd"}, {"method": "infonce"}], "seeds": [0, 1]}))
    configs, seeds = load_sweep(sweep)
    assert [c.method for c in configs] == ["kd", "infonce"] and seeds == [0, 1]
    assert "duplicate" in caplog.text
    assert main(["sweep", "--sweep", str(sweep), "--data", str(data), "--out", str(tmp_path / "sw")]) == 0
    rows = list(csv.DictReader((tmp_path / "sw" / "sweep.csv").open()))
    assert len(rows) == 2 and rows[0]["n_ok"] == "2"
    empty = tmp_path / "empty.json"
    empty.write_text("")
    with pytest.raises(UsageError):
        load_sweep(empty)
    assert main(["sweep", "--sweep", str(empty), "--data", str(data), "--out", str(tmp_path / "sw2")]) == 1


def test_noise_stats_command(tmp_path, data):
    _, run = run_train(tmp_path, data)
    out = tmp_path / "ns"
    code = main(["noise-stats", "--checkpoint", str(run / "checkpoint.json"), "--data", str(data),
                 "--batch-size", "8,16", "--n-batches", "20", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader((out / "noise_stats.csv").open()))
    assert [r["batch_size"] for r in rows] == ["8", "16"]
    assert all(float(r["max_identity_error"]) < 1e-12 for r in rows)


def test_compose_bench_requires_attributes(tmp_path, data):
    _, run = run_train(tmp_path, data)
    args = ["compose-bench", "--checkpoint", str(run / "checkpoint.json"), "--data", str(data), "--out", str(tmp_path / "cb")]
    assert main(args) == 1


def test_replay_reproduces_train(tmp_path, data):
    _, run = run_train(tmp_path, data)
    assert main(["replay", "--manifest", str(run / "manifest.json"), "--out", str(tmp_path / "again")]) == 0


def test_replay_detects_tampering(tmp_path, data):
    _, run = run_train(tmp_path, data)
    manifest = json.loads((run / "manifest.json").read_text())
    manifest["artifacts"]["checkpoint.json"] = "0" * 64
    (run / "manifest.json").write_text(json.dumps(manifest))
    assert main(["replay", "--manifest", str(run / "manifest.json"), "--out", str(tmp_path / "again")]) == 2


def test_csv_data_round_trips_through_cli(tmp_path):
    path = tmp_path / "d.csv"
    assert main(["gen-data", "--concepts", "3", "--per-concept", "4", "--d-img", "3", "--d-txt", "3", "--out", str(path)]) == 0
    header = path.read_text().splitlines()[0]
    assert header.startswith("image_label,caption_label,img_0")
    assert np.isfinite(np.loadtxt(path, delimiter=",", skiprows=1)).all()
