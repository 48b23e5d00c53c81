import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from nashbo.cli import main


@pytest.fixture
def desk_config(tmp_path):
    doc = {
        "game": {
            "kind": "power",
            "noise_std": 1e-3,
            "network": {"num_bs": 3, "num_ue_per_bs": 2, "tx_antennas": 4, "rx_antennas": 2},
        },
        "grid": {"points_per_dim": 3, "max_profiles": 50},
        "policy": {"kind": "ppr_ucb"},
        "surrogate": {"noise_var": 1e-6, "rff_dim": 128},
        "iterations": 2,
        "reps": 1,
        "base_seed": 1,
        "out_dir": str(tmp_path / "default_out"),
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_run_command(desk_config, tmp_path):
    runner = CliRunner()
    out = tmp_path / "run_out"
    result = runner.invoke(main, ["run", "--config", str(desk_config), "--out", str(out)])
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert Path(body["aggregate_file"]).exists()
    assert len(body["trajectory_files"]) == 1


def test_replicate_overrides_reps(desk_config, tmp_path):
    runner = CliRunner()
    out = tmp_path / "rep_out"
    result = runner.invoke(
        main, ["replicate", "--config", str(desk_config), "--reps", "2", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert len(body["trajectory_files"]) == 2


def test_oracle_command_stdout(desk_config):
    runner = CliRunner()
    result = runner.invoke(main, ["oracle", "--config", str(desk_config)])
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert "epsilon_star" in body and "per_profile_max_regret" in body


def test_sweep_command(desk_config, tmp_path):
    runner = CliRunner()
    out = tmp_path / "sweep_out"
    result = runner.invoke(
        main, ["sweep", "--config", str(desk_config), "--players", "2", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    assert (out / "sweep.csv").exists()


def test_sweep_rejects_bad_list(desk_config):
    runner = CliRunner()
    result = runner.invoke(main, ["sweep", "--config", str(desk_config), "--players", "a,b"])
    assert result.exit_code != 0


def test_export_plot_data(desk_config, tmp_path):
    runner = CliRunner()
    out = tmp_path / "run_out"
    runner.invoke(main, ["run", "--config", str(desk_config), "--out", str(out)])
    result = runner.invoke(
        main, ["export-plot-data", "--runs", str(out), "--out", str(tmp_path / "plots")]
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "plots" / "curves.csv").exists()


def test_seed_override_changes_output(desk_config, tmp_path):
    runner = CliRunner()
    a = tmp_path / "a"
    b = tmp_path / "b"
    runner.invoke(main, ["run", "--config", str(desk_config), "--seed", "7", "--out", str(a)])
    runner.invoke(main, ["run", "--config", str(desk_config), "--seed", "8", "--out", str(b)])
    assert (a / "trajectory_rep000.csv").read_bytes() != (b / "trajectory_rep000.csv").read_bytes()
