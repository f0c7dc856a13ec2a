import json
from pathlib import Path

import pytest

from lerwcap.cli import run

SNAP = Path(__file__).parent / "snapshots"


@pytest.mark.parametrize("cmd", ["", "walk", "capacity", "oracle", "twosided", "experiment"])
def test_help_snapshot(cmd, capsys):
    argv = [cmd, "--help"] if cmd else ["--help"]
    assert run(argv) == 0
    assert capsys.readouterr().out == (SNAP / f"help_{cmd or 'main'}.txt").read_text()


@pytest.mark.parametrize("cmd", ["walk", "capacity", "oracle", "twosided", "experiment"])
def test_help_lists_defaults(cmd, capsys):
    run([cmd, "--help"])
    out = capsys.readouterr().out
    assert "--seed" in out and "--threads" in out and "default" in out


def test_walk_deterministic(capsys):
    argv = ["walk", "--d", "3", "--steps", "1000", "--seed", "7", "--loop-erase"]
    assert run(argv) == 0
    first = capsys.readouterr()
    assert run(argv) == 0
    second = capsys.readouterr()
    assert first.out == second.out and first.out.count("\n") > 1
    assert json.loads(first.err.splitlines()[0])["config"]["seed"] == 7


def test_walk_cut_times(capsys):
    assert run(["walk", "--d", "3", "--steps", "50", "--seed", "1", "--cut-times"]) == 0
    out = capsys.readouterr().out
    assert "# cut-times" in out and out.strip().endswith("50")


def test_entropy_seed_printed(capsys):
    assert run(["walk", "--d", "3", "--steps", "5"]) == 0
    cfg = json.loads(capsys.readouterr().err.splitlines()[0])["config"]
    assert cfg["seed_source"] == "entropy" and isinstance(cfg["seed"], int)


def test_usage_errors_exit_1(capsys):
    assert run(["walk", "--d", "3"]) == 1
    assert run(["walk", "--d", "3", "--steps", "5", "--unknown"]) == 1
    assert run(["nope"]) == 1
    assert run(["walk", "--d", "3", "--steps", "-4"]) == 1
    assert run(["experiment", "--seed", "1"]) == 1


def test_runtime_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.chain"
    bad.write_text("2\n0 1 1\n1 0 1\n")
    assert run(["oracle", "--chain-file", str(bad), "--set", "0", "--seed", "1"]) == 2
    assert "NonTransient" in capsys.readouterr().err


def test_oracle_chain_file(tmp_path, capsys):
    f = tmp_path / "two.chain"
    f.write_text("2\n0 1 0.5\n1 0 0.5\n")
    assert run(["oracle", "--chain-file", str(f), "--set", "0,1", "--seed", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["capacity"] == pytest.approx(1.0) and out["passed"]


def test_oracle_suite_small(capsys):
    assert run(["oracle", "--suite", "decomposition", "--chains", "20", "--max-states", "15", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert json.loads(out.splitlines()[0])["max_deviation"] <= 1e-10
    assert "max |cap - decomposition|" in out


def test_capacity_json_and_csv(capsys):
    assert run(["capacity", "--points", "pair", "--d", "3", "--trials", "2000", "--R", "60", "--seed", "3",
                "--csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    rec = json.loads(lines[0])
    assert rec["method"] == "escape_sum" and rec["provenance"]["seed"] == 3
    assert lines[1] == "method,value,stderr,trials,R,seed,wall_time"


def test_capacity_points_file(tmp_path, capsys):
    f = tmp_path / "a.txt"
    f.write_text("0,0,0\n1,0,0\n")
    assert run(["capacity", "--points-file", str(f), "--method", "hitting", "--trials", "2000", "--seed", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "hitting_green"


def test_twosided_reports(tmp_path, capsys):
    dump = tmp_path / "s.txt"
    assert run(["twosided", "--d", "5", "--side", "8", "--samples", "20", "--report", "stationarity",
                "--shifts", "0,1", "--seed", "5", "--dump", str(dump)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert 0 < rep["acceptance_rate"] <= 1 and rep["stationarity"]["0"]["p_value"] == 1.0
    assert dump.read_text().count("# sample") == 20
    assert run(["twosided", "--d", "4", "--side", "16", "--samples", "3", "--n-weight", "16", "--w-trials", "50",
                "--report", "stationarity", "--seed", "5"]) == 1


def test_experiment_from_config(tmp_path, capsys):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("experiment = ergodic_average_experiment\nd = 4\nladder = 16,32\ntrials = 4\nseed = 1\n")
    assert run(["experiment", "--config", str(cfg), "--output", str(tmp_path / "out"), "--threads", "1"]) == 0
    assert (tmp_path / "out" / "ergodic_average_experiment.csv").exists()
    summary = json.loads(capsys.readouterr().out)["summary"]
    assert summary["seed"] == 1


def test_experiment_seed_flag_overrides_config(tmp_path, capsys):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("experiment = ergodic_average_experiment\nd = 4\nladder = 16,32\ntrials = 4\nseed = 1\n")
    assert run(["experiment", "--config", str(cfg), "--seed", "9"]) == 0
    assert json.loads(capsys.readouterr().out)["summary"]["seed"] == 9
