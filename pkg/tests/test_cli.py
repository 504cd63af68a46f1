import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from eegcast.cli import build_parser, read_config, run, CLIError
from eegcast.denoiser import DenoiserConfig, init_denoiser
from eegcast.forecast import read_forecast_csv, write_forecast_csv

from helpers import run_smoke


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    return root, run_smoke(root, seed=3)


def _metrics(path):
    with open(path, newline="", encoding="utf-8") as f:
        return {(r["metric"], r["channel"]): r["value"] for r in csv.DictReader(f)}


def test_eval_identical_csvs_give_zero_error(tmp_path):
    data = np.random.default_rng(0).normal(size=(3, 40))
    write_forecast_csv(tmp_path / "a.csv", data, ["A", "B", "C"])
    assert run(["eval", "--pred", str(tmp_path / "a.csv"), "--true", str(tmp_path / "a.csv"),
                "--out", str(tmp_path / "ev")]) == 0
    m = _metrics(tmp_path / "ev/metrics.csv")
    assert float(m[("model_MAE", "Average")]) == 0.0
    assert float(m[("model_R2", "A")]) == 1.0
    with open(tmp_path / "ev/metrics.csv", encoding="utf-8") as f:
        assert f.readline().strip() == "metric,channel,value"


def test_eval_baseline_and_scores(tmp_path):
    rng = np.random.default_rng(1)
    truth = rng.normal(size=(4, 30))
    write_forecast_csv(tmp_path / "p.csv", truth + 0.1 * rng.normal(size=truth.shape), list("ABCD"), truth)
    write_forecast_csv(tmp_path / "b.csv", truth + rng.normal(size=truth.shape), list("ABCD"), truth)
    with open(tmp_path / "s.csv", "w", encoding="utf-8") as f:
        f.write("label,score,score_b\n0,0.1,0.2\n0,0.4,0.3\n1,0.35,0.9\n1,0.8,0.7\n")
    assert run(["eval", "--pred", str(tmp_path / "p.csv"), "--baseline", str(tmp_path / "b.csv"),
                "--scores", str(tmp_path / "s.csv"), "--out", str(tmp_path / "ev")]) == 0
    m = _metrics(tmp_path / "ev/metrics.csv")
    assert float(m[("AUC", "score")]) == pytest.approx(0.75)
    assert float(m[("AUC", "score_b")]) == pytest.approx(1.0)
    assert ("t_test_mae_vs_baseline_p", "ALL") in m
    assert ("delong_p", "score_vs_score_b") in m
    assert float(m[("model_MAE", "Average")]) < float(m[("baseline_MAE", "Average")])
    rows = list(csv.reader(open(tmp_path / "ev/regression_table.csv", encoding="utf-8")))
    assert rows[0] == ["model", "channel", "MAE", "MSE", "RMSE", "R2"]
    assert [r[1] for r in rows[1:6]] == list("ABCD") + ["Average"]


def test_eval_constant_truth_reports_undefined(tmp_path):
    write_forecast_csv(tmp_path / "p.csv", np.ones((1, 5)) * 2, ["A"], np.ones((1, 5)))
    assert run(["eval", "--pred", str(tmp_path / "p.csv"), "--out", str(tmp_path / "ev")]) == 0
    assert _metrics(tmp_path / "ev/metrics.csv")[("model_R2", "A")] == "undefined"


def test_eval_errors(tmp_path, capsys):
    assert run(["eval", "--out", str(tmp_path)]) != 0
    assert "nothing to evaluate" in capsys.readouterr().err
    assert run(["eval", "--pred", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) != 0
    assert "missing.csv" in capsys.readouterr().err


def test_forecast_horizon_seconds(tmp_path):
    cfg = DenoiserConfig(height=8, width=2, observed_rows=4, base_width=2, depth=1, time_embed_dim=4)
    init_denoiser(cfg).save(tmp_path / "m.ckpt")
    np.save(tmp_path / "x.npy", np.random.default_rng(0).normal(size=(2, 4)))
    out = tmp_path / "f.csv"
    assert run(["forecast", "--model", str(tmp_path / "m.ckpt"), "--input", str(tmp_path / "x.npy"),
                "--rate", "512", "--horizon-seconds", "0.5", "--steps", "1", "--out", str(out)]) == 0
    labels, pred, truth = read_forecast_csv(out)
    assert labels == ["CH0", "CH1"] and pred.shape == (2, 256) and truth is None
    assert np.all(np.isfinite(pred))


def test_forecast_errors(tmp_path, capsys):
    np.save(tmp_path / "x.npy", np.zeros((2, 4)))
    assert run(["forecast", "--model", str(tmp_path / "nope.ckpt"), "--input", str(tmp_path / "x.npy"),
                "--rate", "10", "--horizon", "4"]) != 0
    assert "not found" in capsys.readouterr().err
    (tmp_path / "bad.ckpt").write_bytes(b"garbage")
    assert run(["forecast", "--model", str(tmp_path / "bad.ckpt"), "--input", str(tmp_path / "x.npy"),
                "--rate", "10", "--horizon", "4"]) != 0
    assert "incompatible" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nseconds = 30\nrate = 32\nnoise-sd = 1.5\n", encoding="utf-8")
    parser = build_parser()
    from eegcast.cli import _apply_config

    args = _apply_config(parser, ["synth", "--config", str(cfg), "--out", "x", "--rate", "16"])
    assert args.seconds == 30.0 and args.noise_sd == 1.5 and args.rate == 16.0
    cfg.write_text("bogus = 1\n", encoding="utf-8")
    with pytest.raises(CLIError, match="bogus"):
        _apply_config(build_parser(), ["synth", "--config", str(cfg), "--out", "x"])
    cfg.write_text("no equals sign\n", encoding="utf-8")
    with pytest.raises(CLIError):
        read_config(cfg)


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("EEGDIF_SEED", "5")
    assert run(["synth", "--out", str(tmp_path / "a"), "--seconds", "4", "--channels", "2"]) == 0
    assert run(["synth", "--out", str(tmp_path / "b"), "--seconds", "4", "--channels", "2", "--seed", "5"]) == 0
    assert run(["synth", "--out", str(tmp_path / "c"), "--seconds", "4", "--channels", "2", "--seed", "6"]) == 0
    a, b, c = ((tmp_path / d / "synth.edf").read_bytes() for d in "abc")
    assert a == b and a != c
    monkeypatch.setenv("EEGDIF_SEED", "x")
    assert run(["synth", "--out", str(tmp_path / "d"), "--seconds", "4"]) != 0


def test_smoke_outputs(smoke, capsys):
    root, csvs = smoke
    assert {"forecast.csv", "scores.csv", "eval/metrics.csv", "eval/roc.csv",
            "eval/classification_table.csv", "eval/regression_table.csv"} <= set(csvs)
    manifest = json.loads((root / "data/manifest.json").read_text(encoding="utf-8"))
    assert manifest["format"] == "eegcast-dataset" and manifest["rate"] == 64.0
    assert len(manifest["channels"]) == 16
    entry = manifest["windows"][0]
    assert {"file", "label", "split", "scaler", "start_time"} <= set(entry)
    assert np.load(root / "data" / entry["file"]).shape == (16, manifest["window_samples"])
    assert {e["split"] for e in manifest["windows"]} == {"train", "test"}
    for svg in (root / "plots").glob("*.svg"):
        tree = ET.parse(svg)
        assert tree.getroot().tag.endswith("svg")
        assert "generated" in svg.read_text(encoding="utf-8")
    assert len(list((root / "plots").glob("*.svg"))) == 2


def test_smoke_is_deterministic(smoke, tmp_path):
    _, first = smoke
    second = run_smoke(tmp_path, seed=3)
    assert sorted(first) == sorted(second)
    for name in first:
        assert first[name].read_bytes() == second[name].read_bytes(), name


def test_warn_single_input(smoke, capsys):
    root, _ = smoke
    out = root / "warn.json"
    assert run(["warn", "--model", str(root / "diff.ckpt"), "--classifier", str(root / "clf.ckpt"),
                "--input", str(root / "raw/synth.edf"), "--start-seconds", "100", "--horizon", "32",
                "--steps", "3", "--out", str(out)]) == 0
    record = json.loads(out.read_text(encoding="utf-8"))
    assert 0.0 <= record["probability"] <= 1.0
    assert record["label"] == int(record["probability"] >= record["threshold"])
    assert "seizure probability" in capsys.readouterr().out


def test_prepare_missing_channel(tmp_path, capsys):
    assert run(["synth", "--out", str(tmp_path), "--seconds", "4", "--channels", "3"]) == 0
    assert run(["prepare", "--edf", str(tmp_path / "synth.edf"), "--out", str(tmp_path / "d")]) != 0
    assert "Fp1" in capsys.readouterr().err


def test_help_lists_subcommands(capsys):
    assert run(["--help"]) == 0
    out = capsys.readouterr().out
    for name in ("synth", "prepare", "train-diffusion", "train-classifier", "forecast", "warn", "eval", "plot"):
        assert name in out
