import pandas as pd
import pytest

from dmr_rec import cli
from dmr_rec.checkpoint import load_checkpoint
from dmr_rec.cli import main
from dmr_rec.logging_db import read_latest_reports, read_latest_runs

SMALL_WORLD = [
    "--n-users", "30", "--n-items", "60", "--n-categories", "4", "--interactions-per-user", "15",
    "--dim", "4", "--trends", "2", "--epochs", "2", "--batch-size", "8", "--learning-rate", "0.01",
    "--eval-n", "5", "--candidate-pool", "10", "--diversity-ns", "5", "--n-max", "5", "--g", "50",
    "--sweep-neighbors", "2,5",
]


@pytest.fixture
def run(tmp_path):
    paths = [
        "--log-path", str(tmp_path / "log.csv"),
        "--out-dir", str(tmp_path / "run"),
        "--db-path", str(tmp_path / "runs.sqlite"),
    ]

    def _run(command: str, *extra: str) -> int:
        return main([command, *paths, *SMALL_WORLD, *extra])

    return _run


@pytest.fixture
def prepared(run):
    assert run("synth") == 0
    assert run("split") == 0
    assert run("build-network") == 0
    return run


def test_full_chain(prepared, tmp_path, capsys):
    run = prepared
    assert run("validate") == 0
    assert "users=30" in capsys.readouterr().out
    assert (tmp_path / "log.truth.csv").exists()
    out = tmp_path / "run"
    for name in ("train.csv", "test.csv", "neighbors.txt", "config.txt"):
        assert (out / name).exists()

    assert run("train") == 0
    assert load_checkpoint(str(out / "model.ckpt")).epochs_done == 2
    assert len(pd.read_csv(out / "epochs.csv")) == 2

    assert run("evaluate", "--baseline") == 0
    report = pd.read_csv(out / "report.csv")
    assert report["label"].tolist() == ["dmr", "popularity"]
    assert "diversity@5" in report.columns
    assert 0.0 < report["purity"][0] <= 1.0
    assert pd.isna(report["purity"][1])
    assert len(read_latest_reports(str(tmp_path / "runs.sqlite"))) == 2

    capsys.readouterr()
    assert run("recommend", "--user", "u00", "--top", "3") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["rank", "item", "probability", "share"]
    assert len(lines) == 4

    commands = [row[2] for row in read_latest_runs(str(tmp_path / "runs.sqlite"))]
    assert commands[:3] == ["evaluate", "train", "build-network"]


def test_resume_extends_training(prepared, tmp_path):
    run = prepared
    out = tmp_path / "run"
    assert run("train", "--epochs", "1") == 0
    assert load_checkpoint(str(out / "model.ckpt")).epochs_done == 1
    assert run("train", "--resume", "--epochs", "3") == 0
    assert load_checkpoint(str(out / "model.ckpt")).epochs_done == 3
    assert pd.read_csv(out / "epochs.csv")["epoch"].tolist() == [1, 2, 3]


def test_sweep(prepared, tmp_path):
    assert prepared("sweep", "--baseline", "--epochs", "1") == 0
    frame = pd.read_csv(tmp_path / "run" / "sweep.csv")
    assert frame["label"].tolist() == ["dmr", "dmr", "popularity"]
    assert frame["neighbors"].tolist()[:2] == [2, 5]


def test_no_arguments():
    assert main([]) == 2


def test_invalid_config_value(run, capsys):
    assert run("synth", "--tau", "1.5") == 2
    assert "error code=2 kind=ConfigError" in capsys.readouterr().err


def test_bad_log(tmp_path, capsys):
    log = tmp_path / "bad.csv"
    log.write_text("u1,a,10,1\nu1,b,-5,1\n", encoding="utf-8")
    assert main(["validate", "--log-path", str(log)]) == 3
    captured = capsys.readouterr()
    assert "line 2: negative timestamp -5" in captured.out
    assert captured.err.startswith("error code=3 kind=DataError message=")


def test_missing_log(run, capsys):
    assert run("split") == 3
    assert "kind=FileNotFoundError" in capsys.readouterr().err


def test_unknown_recommend_user(prepared, capsys):
    assert prepared("train", "--epochs", "1") == 0
    assert prepared("recommend", "--user", "nobody") == 3


def test_diverging_training_exits_with_numeric_code(prepared, capsys):
    assert prepared("train", "--learning-rate", "1e200") == 4
    assert "kind=NumericError" in capsys.readouterr().err


def test_evaluate_without_checkpoint(prepared):
    assert prepared("evaluate") == 3


def test_recommend_top_must_be_positive(prepared, capsys):
    assert prepared("train", "--epochs", "1") == 0
    assert prepared("recommend", "--user", "u00", "--top", "0") == 2
    assert "kind=ConfigError message=top must be >= 1" in capsys.readouterr().err


def test_impossible_world_is_a_usage_error(run, capsys):
    assert run("synth", "--n-items", "2") == 2
    assert "kind=ConfigError" in capsys.readouterr().err


@pytest.mark.parametrize(
    "error",
    [
        ValueError("history and future sequences are both empty"),
        RuntimeError("worker died"),
        KeyError("i0001"),
    ],
)
def test_other_failures_exit_with_data_code(tmp_path, monkeypatch, capsys, error):
    def broken(*args, **kwargs):
        raise error

    monkeypatch.setattr(cli, "scan_log", broken)
    assert main(["validate", "--log-path", str(tmp_path / "log.csv")]) == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert err[0].startswith(f"error code=3 kind={type(error).__name__} message=")
