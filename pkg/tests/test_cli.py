import json
import subprocess
import sys

import pytest

from resdiff.cli import main

FAST = ["--iterations", "40"]


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "stationary-attack" in out and "resilience-sweep" in out


def test_presets_show_yaml(capsys):
    assert main(["presets", "--show", "single-task"]) == 0
    assert "n_agents: 20" in capsys.readouterr().out


def test_run_writes_trace(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("n_agents: 12\ntopology: {radius: 0.5}\n")
    rc = main(["run", "--config", str(cfg), "--seed", "4", "--out-dir", str(tmp_path / "out"),
               "--record", "states,msd", *FAST])
    assert rc == 0
    line = json.loads(capsys.readouterr().out.strip())
    assert line["seed"] == 4
    names = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert names == ["config.yaml", "msd.csv", "states.csv", "summary.json"]


def test_run_several_runs_get_their_own_directories(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("n_agents: 12\ntopology: {radius: 0.5}\n")
    assert main(["run", "--config", str(cfg), "--runs", "2", "--out-dir", str(tmp_path), *FAST]) == 0
    seeds = [json.loads(l)["seed"] for l in capsys.readouterr().out.splitlines()]
    assert seeds == [0, 1]
    assert (tmp_path / "run0" / "summary.json").exists() and (tmp_path / "run1").is_dir()


def test_plan_attack(capsys):
    assert main(["plan-attack", "--preset", "network-attack", "--seed", "0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["size"] == len(out["dominating_set"]) > 0


def test_sweep_writes_csv(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("n_agents: 16\ntopology: {radius: 0.5}\nattack: {count: 1}\n")
    rc = main(["sweep-f", "--config", str(cfg), "--F", "0,1", "--out-dir", str(tmp_path), *FAST])
    assert rc == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0] == "F,msd,msd_db" and rows[-1].startswith("ncop,")


@pytest.mark.parametrize("argv", [
    ["run", "--preset", "nope"],
    ["run", "--preset", "single-task", "--record", "pixels"],
    ["run", "--preset", "single-task", "--runs", "0"],
    ["sweep-f", "--preset", "resilient", "--F", "a,b"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("config error:")


def test_missing_config_file_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_runtime_failure_exits_1(tmp_path, capsys):
    # the output directory is an existing file, so writing the trace fails
    blocker = tmp_path / "taken"
    blocker.write_text("")
    assert main(["run", "--preset", "single-task", "--out-dir", str(blocker), *FAST]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_unconnectable_topology_is_a_config_error(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("n_agents: 50\ntopology: {radius: 0.001}\n")
    assert main(["run", "--config", str(cfg), *FAST]) == 2


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "resdiff.cli", "presets"], capture_output=True,
                         text=True, check=False)
    assert out.returncode == 0 and "single-task" in out.stdout
