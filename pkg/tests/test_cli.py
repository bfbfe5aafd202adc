import json
import os
import subprocess
import sys

import pytest

from gmnlab import cli
from gmnlab import nbody_sim as sim


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _json_lines(out):
    return [json.loads(line) for line in out.splitlines() if line.strip()]


@pytest.fixture(scope="module")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    code = cli.main(["generate", "--p", "1", "--s", "1", "--split", "8,4,4", "--steps", "50",
                     "--seed", "2", "--out", str(root)])
    assert code == 0
    return root


def test_generate_reports_and_is_deterministic(capsys, tmp_path):
    args = ["generate", "--p", "1", "--s", "1", "--hinges", "1", "--num", "3", "--steps", "40"]
    code, out, _ = run(capsys, *args, "--out", tmp_path / "a")
    assert code == 0
    report = json.loads(out)
    assert report["samples"] == 3 and report["n_particles"] == 6
    assert report["max_relative_arm_drift"] < 1e-12
    run(capsys, *args, "--out", tmp_path / "b")
    assert sorted(os.listdir(tmp_path / "a")) == ["frames.f64", "meta.json"]
    for name in ("frames.f64", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_zero_samples(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", "--p", "2", "--num", "0", "--out", tmp_path)
    assert code == 0 and json.loads(out)["samples"] == 0
    assert len(sim.read_dataset(str(tmp_path))) == 0


def test_generate_usage_errors(capsys, tmp_path):
    assert run(capsys, "generate", "--num", "2", "--out", tmp_path)[0] == 2
    assert run(capsys, "generate", "--p", "1", "--num", "-1", "--out", tmp_path)[0] == 2
    assert run(capsys, "generate", "--p", "1", "--split", "1,2", "--out", tmp_path)[0] == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["generate", "--p", "1", "--bogus", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_split_layout(data_root):
    for name, n in (("train", 8), ("val", 4), ("test", 4)):
        ds = sim.read_dataset(str(data_root / name))
        assert len(ds) == n and ds.stream == sim.SPLITS.index(name)


def test_train_then_eval(capsys, data_root, tmp_path):
    out_path = tmp_path / "m.json"
    code, out, _ = run(capsys, "train", "--model", "gmn", "--data", data_root, "--epochs", "2",
                       "--hidden", "8", "--layers", "2", "--out", out_path)
    assert code == 0
    report = json.loads(out)
    assert set(report) == {"model", "epochs", "best_epoch", "val_mse_x1e2", "wall_seconds"}
    assert report["epochs"] == 2
    assert (tmp_path / "m.config.json").exists() and (tmp_path / "m.history.json").exists()
    code, out, _ = run(capsys, "eval", "--params", out_path, "--data", data_root / "val")
    assert code == 0
    metrics = json.loads(out)
    assert set(metrics) == {"mse_x1e2", "constraint_error"}
    assert metrics["mse_x1e2"] == pytest.approx(report["val_mse_x1e2"], rel=1e-12)
    assert metrics["constraint_error"] < 1e-12
    code, _, err = run(capsys, "eval", "--model", "egnn", "--params", out_path, "--data", data_root)
    assert code == 2 and "does not match" in err


def test_eval_jobs_do_not_change_result(capsys, data_root, tmp_path):
    out_path = tmp_path / "l.json"
    run(capsys, "train", "--model", "linear", "--data", data_root, "--out", out_path)
    one = run(capsys, "eval", "--params", out_path, "--data", data_root, "--jobs", "1")[1]
    four = run(capsys, "eval", "--params", out_path, "--data", data_root, "--jobs", "4")[1]
    assert one == four


def test_missing_files_exit_1(capsys, tmp_path):
    assert run(capsys, "eval", "--params", tmp_path / "none.json", "--data", tmp_path)[0] == 1
    assert run(capsys, "train", "--model", "egnn", "--data", tmp_path / "none", "--out", tmp_path / "x.json")[0] == 1


def test_malformed_dataset_exit_1(capsys, data_root, tmp_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    for name in os.listdir(data_root / "test"):
        (bad / name).write_bytes((data_root / "test" / name).read_bytes())
    frames = (bad / "frames.f64").read_bytes()
    (bad / "frames.f64").write_bytes(frames[:-8])
    code, _, err = run(capsys, "train", "--model", "egnn", "--data", bad, "--out", tmp_path / "x.json")
    assert code == 1 and "malformed" in err


def test_check_reduction_suite(capsys):
    code, out, _ = run(capsys, "check", "--suite", "reduction")
    assert code == 0
    (line,) = _json_lines(out)
    assert line["suite"] == "reduction" and line["passed"] is True
    assert set(line) == {"suite", "invariant", "passed", "value", "threshold", "seed", "detail"}


def test_check_failure_exit_5(capsys, monkeypatch):
    from gmnlab import checks

    def failing(name, seed=0):
        return [checks.CheckResult(name, "always fails", False, 1.0, 0.5, seed)]

    monkeypatch.setattr(checks, "run_suite", failing)
    code, _, err = run(capsys, "check", "--suite", "dynamics")
    assert code == 5 and "always fails" in err


def test_sweep_to_stdout(capsys):
    code, out, _ = run(capsys, "sweep", "--train-sizes", "3", "--systems", "2-0-0", "--models", "linear",
                       "--seeds", "0,1", "--val-size", "2", "--test-size", "2", "--steps", "5", "--out", "-")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("model,system,train_size,seed,mse_x1e2,constraint_error")
    assert len(lines) == 3
    assert run(capsys, "sweep", "--train-sizes", "3", "--systems", "2-0", "--models", "linear", "--out", "-")[0] == 2


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("GMNLAB_THREADS", "2")
    assert cli.thread_cap(8) == 2
    monkeypatch.setenv("GMNLAB_THREADS", "x")
    with pytest.raises(cli.UsageError):
        cli.thread_cap(1)
    monkeypatch.delenv("GMNLAB_THREADS")
    assert cli.thread_cap() == 1


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gmnlab.cli", "check", "--suite", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "invalid choice" in proc.stderr
