"""Tests for the matreg command line."""

import json

import pytest
from click.testing import CliRunner

from matreg.cli import EXIT_CONFIG, EXIT_SOLVER, cli
from matreg.errors import SolverError
from matreg.experiments import StudyResult


@pytest.fixture
def runner(tmp_path, monkeypatch):
    """A runner isolated from any .env file or MATREG_ variables in the caller's shell."""
    monkeypatch.chdir(tmp_path)
    for name in ("MATREG_OUTDIR", "MATREG_WORKERS", "MATREG_LOG_LEVEL", "MATREG_LOG_JSON"):
        monkeypatch.delenv(name, raising=False)
    return CliRunner()


@pytest.fixture
def fake_run(mocker):
    """Replace the study driver with one that echoes the resolved config back."""
    seen = []

    def run(config):
        seen.append(config)
        return StudyResult(config.scenario.kind, config.scenario.seed)

    mocker.patch("matreg.cli.run_experiment", side_effect=run)
    return seen


class TestHelp:
    """Tests for the command listing."""

    def test_lists_commands(self, runner):
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for command in ("shapes", "lowrank", "efficiency", "consistency", "csvrun"):
            assert command in result.output


class TestRun:
    """Tests for running a study through the command line."""

    def test_writes_and_echoes_paths(self, runner, fake_run, tmp_path):
        result = runner.invoke(cli, ["--outdir", "out", "--seed", "9", "consistency"])
        assert result.exit_code == 0, result.output
        assert "manifest.json" in result.output
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["seed"] == 9
        assert fake_run[0].scenario.kind == "consistency"

    def test_subcommand_options(self, runner, fake_run):
        result = runner.invoke(
            cli, ["lowrank", "--rank", "3", "--scheme", "S2", "--replications", "4"]
        )
        assert result.exit_code == 0, result.output
        scenario = fake_run[0].scenario
        assert (scenario.r, scenario.scheme.value, scenario.replications) == (3, "S2", 4)

    def test_repeated_solver_option(self, runner, fake_run):
        result = runner.invoke(cli, ["efficiency", "--solver", "apg", "--solver", "admm"])
        assert result.exit_code == 0, result.output
        assert [s.value for s in fake_run[0].scenario.solver_set] == ["apg", "admm"]

    def test_config_file(self, runner, fake_run, tmp_path):
        path = tmp_path / "study.toml"
        path.write_text('workers = 3\n\n[scenario]\nshape = "heart"\nreplications = 2\n')
        result = runner.invoke(cli, ["--config", str(path), "shapes", "--replications", "5"])
        assert result.exit_code == 0, result.output
        config = fake_run[0]
        assert config.workers == 3
        assert config.scenario.shape.value == "heart"
        assert config.scenario.replications == 5


class TestEnvironment:
    """Tests for MATREG_ variables and their precedence."""

    def test_env_outdir(self, runner, fake_run, tmp_path, monkeypatch):
        monkeypatch.setenv("MATREG_OUTDIR", str(tmp_path / "from_env"))
        result = runner.invoke(cli, ["consistency"])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "from_env" / "manifest.json").exists()

    def test_flag_beats_env(self, runner, fake_run, tmp_path, monkeypatch):
        monkeypatch.setenv("MATREG_OUTDIR", str(tmp_path / "from_env"))
        result = runner.invoke(cli, ["--outdir", str(tmp_path / "flag"), "consistency"])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "flag" / "manifest.json").exists()
        assert not (tmp_path / "from_env").exists()

    def test_env_beats_file(self, runner, fake_run, tmp_path, monkeypatch):
        path = tmp_path / "study.toml"
        path.write_text("workers = 2\n")
        monkeypatch.setenv("MATREG_WORKERS", "4")
        result = runner.invoke(cli, ["--config", str(path), "consistency"])
        assert result.exit_code == 0, result.output
        assert fake_run[0].workers == 4

    def test_unset_env_keeps_file_value(self, runner, fake_run, tmp_path):
        path = tmp_path / "study.toml"
        path.write_text("workers = 2\n")
        result = runner.invoke(cli, ["--config", str(path), "consistency"])
        assert result.exit_code == 0, result.output
        assert fake_run[0].workers == 2


class TestExitCodes:
    """Tests for the documented exit codes."""

    def test_kind_mismatch(self, runner, fake_run, tmp_path):
        path = tmp_path / "study.toml"
        path.write_text('[scenario]\nkind = "lowrank"\n')
        result = runner.invoke(cli, ["--config", str(path), "shapes"])
        assert result.exit_code == EXIT_CONFIG
        assert "lowrank" in result.output
        assert not fake_run

    def test_invalid_value(self, runner, fake_run, tmp_path):
        path = tmp_path / "study.toml"
        path.write_text("[scenario]\nn_ladder = [80, 40]\n")
        result = runner.invoke(cli, ["--config", str(path), "consistency"])
        assert result.exit_code == EXIT_CONFIG

    def test_missing_config_file(self, runner):
        result = runner.invoke(cli, ["--config", "nope.toml", "consistency"])
        assert result.exit_code == 2

    def test_solver_failure(self, runner, mocker):
        mocker.patch(
            "matreg.cli.run_experiment",
            side_effect=SolverError("newton system not finite", outer_iteration=4),
        )
        result = runner.invoke(cli, ["consistency"])
        assert result.exit_code == EXIT_SOLVER
        assert "outer_iteration=4" in result.output


class TestEndToEnd:
    """A real, tiny study through every layer."""

    def test_consistency(self, runner, tmp_path):
        path = tmp_path / "tiny.toml"
        path.write_text(
            "[scenario]\n"
            "n_ladder = [40, 80]\n"
            "m = 4\nq = 4\np = 6\nr = 1\n"
            "replications = 1\n"
        )
        result = runner.invoke(cli, ["--config", str(path), "--outdir", "out", "consistency"])
        assert result.exit_code == 0, result.output
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert set(manifest["verdict"]) == {"error_b_decreasing", "error_gamma_decreasing"}
        assert "consistency_seed0_ladder.csv" in manifest["files"]
