import csv
import io
import json
import subprocess
import sys

import pytest

from qmavg import harness
from qmavg.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

SMALL = ["--qubits", "1", "--particles-per-model", "50", "--batches", "2", "--shots-per-batch", "10",
         "--trials", "2"]


def test_tomography_to_file(tmp_path):
    out = tmp_path / "t.jsonl"
    assert main(["tomography", *SMALL, "--out", str(out)]) == EXIT_OK
    records = [json.loads(line) for line in out.read_text(encoding="utf-8").splitlines()]
    assert len(records) == 4
    assert [(r["trial_id"], r["step_index"]) for r in records] == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_rb_to_stdout(capsys):
    code = main(["rb", "--particles-per-model", "50", "--batches", "1", "--sequence-lengths", "10,30",
                 "--repetitions-per-length", "20", "--trials", "1", "--no-per-shot-updates"])
    assert code == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record["experiment"] == "rb" and record["cumulative_shots"] == 40


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("qubits: 1\nparticles-per-model: 40\nbatches: 3\nshots-per-batch: 5\ntrials: 1\nseed: 3\n",
                   encoding="utf-8")
    out = tmp_path / "o.jsonl"
    assert main(["tomography", "--config", str(cfg), "--batches", "2", "--out", str(out)]) == EXIT_OK
    assert len(out.read_text(encoding="utf-8").splitlines()) == 2


@pytest.mark.parametrize("argv", [
    ["tomography", "--qubits", "1", "--true-rank", "3"],
    ["tomography", "--particles-per-model", "0"],
    ["rb", "--liu-west-a", "2"],
    ["tomography", "--config", "/nonexistent/cfg.yaml"],
])
def test_invalid_configuration_exit_code(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "invalid configuration" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("warp-factor: 9\n", encoding="utf-8")
    assert main(["rb", "--config", str(cfg)]) == EXIT_CONFIG


def test_all_trials_failed_exit_code(monkeypatch, tmp_path):
    def failing(config, trial_id, keep=None):
        return [harness._failure(config, trial_id, 0, RuntimeError("zero evidence"))]

    monkeypatch.setitem(harness.TRIAL_RUNNERS, "tomography", failing)
    out = tmp_path / "f.jsonl"
    assert main(["tomography", *SMALL, "--out", str(out)]) == EXIT_RUNTIME
    assert all(json.loads(line)["status"] == "failed" for line in out.read_text().splitlines())


def test_summarize(tmp_path):
    records = tmp_path / "r.jsonl"
    assert main(["tomography", *SMALL, "--out", str(records)]) == EXIT_OK
    out = tmp_path / "s.csv"
    assert main(["summarize", str(records), "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out.read_text(encoding="utf-8"))))
    assert [r["statistic"] for r in rows] == ["median", "q1", "q3"] * 2
    assert "posterior[rank-1]" in rows[0] and "mae_error" in rows[0]


def test_summarize_bad_input(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n", encoding="utf-8")
    assert main(["summarize", str(bad)]) == EXIT_CONFIG


def test_criteria(capsys):
    assert main(["criteria", "--experiment", "rb", "--particles-per-model", "50", "--batches", "1",
                 "--sequence-lengths", "10,50", "--repetitions-per-length", "30"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert {r["model"] for r in rows} == {"zeroth", "first"}
    assert all(int(r["n_measurements"]) == 60 for r in rows)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qmavg", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "summarize" in proc.stdout
