import json
import logging

import pytest

from main import dispatch

TINY = ["--set", "kernel_widths=1,2", "--set", "n_filters=4", "--set", "n_slices=2", "--set", "capsule_len=3",
        "--set", "epochs=2", "--set", "batch_size=4"]


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def write_spec(path, n_rois=8, n_per_class=6):
    path.write_text(json.dumps({
        "n_rois": n_rois, "n_timepoints": 60, "n_per_class": n_per_class,
        "blocks": [{"start": 0, "stop": 3, "coupling_sz": 0.8, "coupling_hc": 0.0}],
    }))
    return path


@pytest.fixture
def dataset(tmp_path):
    spec = write_spec(tmp_path / "spec.json")
    assert dispatch(["synth", "--out", str(tmp_path / "data"), "--spec", str(spec), "--seed", "3"]) == 0
    return tmp_path / "data" / "manifest.csv"


def test_no_arguments_is_usage_error(capsys):
    assert dispatch([]) == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["synth", "train", "eval", "crossval", "trace", "baseline", "ablation"])
def test_help_exits_zero(command, capsys):
    assert dispatch([command, "--help"]) == 0
    assert "--" in capsys.readouterr().out


def test_missing_seed_is_usage_error(dataset, capsys):
    assert dispatch(["crossval", "--data", str(dataset)]) == 1
    assert "--seed" in capsys.readouterr().err


def test_unknown_config_key(dataset, capsys):
    assert dispatch(["train", "--data", str(dataset), "--out-checkpoint", "x.ckpt", "--seed", "1",
                     "--set", "learning_speed=2"]) == 1
    assert "learning_speed" in capsys.readouterr().err


def test_config_file_and_range_check(dataset, tmp_path, capsys):
    config = tmp_path / "run.conf"
    config.write_text("# tiny run\ndropout_rate = 1.5\n")
    assert dispatch(["train", "--data", str(dataset), "--out-checkpoint", str(tmp_path / "m.ckpt"),
                     "--seed", "1", "--config", str(config)]) == 1
    assert "dropout_rate" in capsys.readouterr().err


def test_synth_is_byte_identical(tmp_path):
    spec = write_spec(tmp_path / "spec.json")
    for out in ("a", "b"):
        assert dispatch(["synth", "--out", str(tmp_path / out), "--spec", str(spec), "--seed", "9"]) == 0
    a = sorted((tmp_path / "a").rglob("*.csv"))
    b = sorted((tmp_path / "b").rglob("*.csv"))
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_synth_then_crossval(dataset, capsys):
    capsys.readouterr()
    assert dispatch(["crossval", "--data", str(dataset), "--folds", "2", "--seed", "1", *TINY]) == 0
    out = capsys.readouterr().out
    assert "seed = 1\n" in out
    assert "n_rois = 8\n" in out
    assert "pooled.accuracy=" in out


def test_crossval_outputs_are_reproducible(dataset, tmp_path):
    for run in ("a", "b"):
        assert dispatch(["crossval", "--data", str(dataset), "--folds", "2", "--seed", "5", *TINY,
                         "--out", str(tmp_path / run / "metrics.txt"),
                         "--checkpoint-dir", str(tmp_path / run / "ckpt")]) == 0
    assert (tmp_path / "a" / "metrics.txt").read_bytes() == (tmp_path / "b" / "metrics.txt").read_bytes()
    for fold in ("fold_00.ckpt", "fold_01.ckpt"):
        assert (tmp_path / "a" / "ckpt" / fold).read_bytes() == (tmp_path / "b" / "ckpt" / fold).read_bytes()


def test_train_eval_trace(dataset, tmp_path, capsys):
    checkpoint = tmp_path / "model.ckpt"
    assert dispatch(["train", "--data", str(dataset), "--out-checkpoint", str(checkpoint), "--seed", "2", *TINY]) == 0
    assert dispatch(["eval", "--checkpoint", str(checkpoint), "--data", str(dataset)]) == 0
    assert "eval.accuracy=" in capsys.readouterr().out

    matrix = dataset.parent / "matrices" / "sample_0000.csv"
    trace = tmp_path / "trace.csv"
    assert dispatch(["trace", "--checkpoint", str(checkpoint), "--input", str(matrix), "--out", str(trace)]) == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "sample_id,iteration,channel,slice,position,c_class0,c_class1"
    assert len(lines) == 1 + 3 * (8 + 7) * 2


def test_eval_with_mismatched_rois(dataset, tmp_path, capsys):
    checkpoint = tmp_path / "model.ckpt"
    assert dispatch(["train", "--data", str(dataset), "--out-checkpoint", str(checkpoint), "--seed", "2", *TINY]) == 0
    spec = write_spec(tmp_path / "spec6.json", n_rois=6)
    assert dispatch(["synth", "--out", str(tmp_path / "six"), "--spec", str(spec), "--seed", "1"]) == 0
    capsys.readouterr()
    assert dispatch(["eval", "--checkpoint", str(checkpoint), "--data", str(tmp_path / "six" / "manifest.csv")]) == 2
    assert "ROIs" in capsys.readouterr().err


def test_bad_checkpoint_is_data_error(dataset, tmp_path, capsys):
    bogus = tmp_path / "bogus.ckpt"
    bogus.write_bytes(b"hello world")
    assert dispatch(["eval", "--checkpoint", str(bogus), "--data", str(dataset)]) == 2
    assert "magic" in capsys.readouterr().err


def test_baseline_command(dataset, capsys):
    assert dispatch(["baseline", "--method", "knn", "--data", str(dataset), "--top-features", "5",
                     "--neighbours", "3", "--folds", "3", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "method = knn\n" in out
    assert "pooled.accuracy=" in out


def test_ablation_command(dataset, tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"cells": [
        {"dropout": "capsule", "kernel": "multi", "multislice": True, "loss_norm": "L2"},
        {"dropout": "capsule", "kernel": "square-3", "multislice": False, "loss_norm": "L2"},
    ]}))
    out = tmp_path / "ablation.csv"
    assert dispatch(["ablation", "--data", str(dataset), "--grid", str(grid), "--out", str(out),
                     "--folds", "2", "--seed", "0", *TINY]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "dropout,kernel,multislice,loss_norm,accuracy,sensitivity,specificity"
    assert len(lines) == 3


def test_unknown_log_level_is_usage_error(tmp_path, capsys):
    spec = write_spec(tmp_path / "spec.json")
    assert dispatch(["--log-level", "loud", "synth", "--out", str(tmp_path / "d"), "--spec", str(spec),
                     "--seed", "1"]) == 1
    assert "--log-level" in capsys.readouterr().err
    assert not (tmp_path / "d").exists()


def test_log_level_accepts_lower_case(dataset, capsys):
    assert dispatch(["--log-level", "warning", "baseline", "--method", "lda", "--data", str(dataset),
                     "--top-features", "5", "--folds", "2", "--seed", "0"]) == 0
    assert "pooled.accuracy=" in capsys.readouterr().out
