"""Tests for tuning, model selection and the study drivers."""

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from matreg.baselines import AdmmConfig
from matreg.datagen import GammaScheme
from matreg.errors import ConfigError, SolverError
from matreg.experiments import (
    ConsistencyStudy,
    CsvRun,
    EfficiencyStudy,
    Estimator,
    ExperimentConfig,
    GridSpec,
    LowRankStudy,
    ShapeStudy,
    SolverChoice,
    SolverSettings,
    build_penalty,
    load_config,
    run_consistency,
    run_experiment,
    run_model_selection,
    run_replications,
    summarize,
    tuning_values,
)
from matreg.model import DesignData, FusedLasso, NuclearNorm, ProblemSpec, SparseGroupLasso
from matreg.ppdna import PpdnaConfig, solve_ppdna

TINY_GRID = GridSpec(alpha_min=0.1, alpha_max=0.5, points=2)


def tiny_shapes(**update):
    base = ShapeStudy(
        shape="square",
        m=8,
        q=8,
        p=100,
        n=60,
        n_val=40,
        n_test=40,
        estimators=(Estimator.NL, Estimator.NSGL),
        grid=TINY_GRID,
        replications=2,
        seed=5,
    )
    return base.model_copy(update=update)


@pytest.fixture
def known_data():
    """One sample with X = diag(3, 1), z = (1, -4) and y = 2."""
    x = np.array([[3.0, 0.0, 0.0, 1.0]])
    z = np.array([[1.0, -4.0]])
    return DesignData(x, z, np.array([2.0]), 2, 2)


class TestTuning:
    """Tests for penalty levels relative to the zero-solution thresholds."""

    def test_known_levels(self, known_data):
        levels = tuning_values(known_data, Estimator.NL, 0.5, 0.5)
        assert levels.rho == pytest.approx(3.0, rel=1e-8)
        assert levels.lam == pytest.approx(4.0)
        assert levels.lam_prime == pytest.approx(4.0)

    def test_elementwise_level(self, known_data):
        levels = tuning_values(known_data, Estimator.VML, 1.0, 0.25, 0.5)
        assert levels.rho == pytest.approx(6.0)
        assert levels.lam == pytest.approx(2.0)
        assert levels.lam_prime == pytest.approx(4.0)

    def test_threshold_is_exact(self, small_data):
        levels = tuning_values(small_data, Estimator.NL, 1.0, 1.0)
        top = np.linalg.svd(small_data.xt_apply(small_data.response), compute_uv=False)[0]
        assert levels.rho == pytest.approx(top, rel=1e-14)
        coeff, report = solve_ppdna(ProblemSpec(small_data, build_penalty(Estimator.NL, levels)))
        assert report.iterations == 0
        np.testing.assert_array_equal(coeff.b_mat, 0.0)
        np.testing.assert_array_equal(coeff.gamma_vec, 0.0)

    def test_zero_response(self):
        data = DesignData(np.ones((3, 4)), np.ones((3, 2)), np.zeros(3), 2, 2)
        levels = tuning_values(data, Estimator.NFL, 0.5, 0.5)
        assert (levels.rho, levels.lam, levels.lam_prime) == (0.0, 0.0, 0.0)


class TestBuildPenalty:
    """Tests for the estimator-to-penalty mapping."""

    def test_nfl(self, known_data):
        spec = build_penalty(Estimator.NFL, tuning_values(known_data, Estimator.NFL, 0.5, 0.5))
        assert isinstance(spec.matrix_penalty, NuclearNorm)
        assert isinstance(spec.vector_penalty, FusedLasso)

    def test_nsgl_needs_groups(self, known_data):
        levels = tuning_values(known_data, Estimator.NSGL, 0.5, 0.5)
        with pytest.raises(ConfigError):
            build_penalty(Estimator.NSGL, levels)
        spec = build_penalty(Estimator.NSGL, levels, [[0], [1]])
        assert isinstance(spec.vector_penalty, SparseGroupLasso)


class TestGrid:
    """Tests for the tuning grid."""

    def test_log_values(self):
        values = GridSpec(alpha_min=0.01, alpha_max=1.0, points=3).values()
        np.testing.assert_allclose(values, [0.01, 0.1, 1.0])

    def test_linear_values(self):
        values = GridSpec(alpha_min=0.2, alpha_max=0.6, points=3, log_scale=False).values()
        np.testing.assert_allclose(values, [0.2, 0.4, 0.6])

    def test_single_point(self):
        assert GridSpec(points=1, alpha_max=0.3).values().tolist() == [0.3]

    def test_range_checked(self):
        with pytest.raises(ValidationError):
            GridSpec(alpha_min=2.0, alpha_max=1.0)


class TestModelSelection:
    """Tests for grid-search model selection."""

    @pytest.fixture
    def split(self, data_factory):
        """Training and validation sets from one truth."""
        return data_factory(21, n=60), data_factory(21, n=40)

    def test_picks_best_validation_cell(self, split):
        train, validation = split
        result = run_model_selection(train, validation, Estimator.NL, TINY_GRID)
        assert len(result.grid) == 4
        best = min(row["validation_rmse"] for row in result.grid)
        assert result.validation_rmse == pytest.approx(best)

    def test_independent_fused_grid(self, split):
        train, validation = split
        grid = TINY_GRID.model_copy(update={"independent_fused": True})
        result = run_model_selection(train, validation, Estimator.NFL, grid)
        assert len(result.grid) == 8

    def test_failed_cells_are_recorded(self, split, mocker):
        train, validation = split
        mocker.patch("matreg.experiments.run_solver", side_effect=SolverError("boom"))
        with pytest.raises(SolverError):
            run_model_selection(train, validation, Estimator.NL, TINY_GRID)

    def test_other_solvers(self, split):
        train, validation = split
        grid = GridSpec(alpha_min=0.5, alpha_max=0.5, points=1)
        result = run_model_selection(train, validation, Estimator.VML, grid, solver=SolverChoice.APG)
        assert result.alpha1 == 0.5
        assert result.grid[0]["status"] in ("converged", "max_iter")


class TestSummarize:
    """Tests for the replication summary."""

    def test_mean_sd_and_failures(self):
        frame = pd.DataFrame(
            {
                "estimator": ["NL", "NL", "NL", "VML"],
                "status": ["ok", "ok", "failed", "ok"],
                "rmse_y": [1.0, 3.0, np.nan, 2.0],
            }
        )
        table = summarize(frame, "estimator", ["rmse_y"]).set_index("estimator")
        assert table.loc["NL", "rmse_y_mean"] == pytest.approx(2.0)
        assert table.loc["NL", "rmse_y_sd"] == pytest.approx(np.sqrt(2.0))
        assert table.loc["NL", "failures"] == 1
        assert table.loc["VML", "rmse_y_sd"] == 0.0

    def test_missing_columns_skipped(self):
        frame = pd.DataFrame({"estimator": ["NL"], "rmse_y": [1.0]})
        table = summarize(frame, "estimator", ["rmse_y", "error_b"])
        assert list(table.columns) == ["estimator", "rmse_y_mean", "rmse_y_sd"]


class TestReplications:
    """Tests for the replication driver."""

    def test_tables(self):
        result = run_replications(tiny_shapes())
        assert set(result.tables) == {"summary", "replications", "grid"}
        summary = result.tables["summary"]
        assert summary["estimator"].tolist() == ["NL", "NSGL"]
        assert len(result.tables["replications"]) == 4
        assert set(result.heatmaps) == {"NL", "NSGL"}

    def test_reproducible(self):
        first = run_replications(tiny_shapes(replications=1))
        second = run_replications(tiny_shapes(replications=1))
        cols = ["rmse_y", "error_b", "error_gamma"]
        pd.testing.assert_frame_equal(
            first.tables["replications"][cols], second.tables["replications"][cols]
        )
        assert (first.tables["summary"]["rmse_y_sd"] == 0.0).all()

    def test_workers_do_not_change_results(self):
        study = tiny_shapes(estimators=(Estimator.NL,))
        serial = run_replications(study, workers=1)
        parallel = run_replications(study, workers=2)
        pd.testing.assert_frame_equal(
            serial.tables["replications"][["rmse_y"]], parallel.tables["replications"][["rmse_y"]]
        )

    def test_noiseless_overdetermined_recovers_truth(self):
        study = LowRankStudy(
            m=8,
            q=8,
            p=100,
            r=2,
            s=0.3,
            n=300,
            n_val=50,
            n_test=50,
            noise_sd=0.0,
            estimators=(Estimator.NL,),
            grid=GridSpec(alpha_min=1e-10, alpha_max=1e-10, points=1),
            replications=1,
            solvers=SolverSettings(ppdna=PpdnaConfig(kkt_tol=1e-10)),
        )
        row = run_replications(study).tables["replications"].iloc[0]
        assert row["error_b"] < 1e-6
        assert row["error_gamma"] < 1e-6


class TestComparisons:
    """Tests for the solver comparison drivers."""

    def test_efficiency(self):
        study = EfficiencyStudy(
            m=10, q=8, p=20, n=60, r=2, s=0.3, gamma_nonsparsity=0.2, max_time=60.0,
            setting="joint", estimator=Estimator.NL,
            solvers=SolverSettings(admm=AdmmConfig(kkt_tol=1e-14, max_iter=3000)),
        )
        result = run_experiment(ExperimentConfig(scenario=study))
        table = result.tables["comparison"].set_index("solver")
        assert list(table.index) == ["ppdna", "admm"]
        assert table.loc["ppdna", "rel_obj"] < 1e-8
        assert table.loc["admm", "iterations"] <= 3000
        assert {"alpha1", "alpha2", "solver", "elapsed", "rel_obj"} <= set(result.traces.columns)

        runs, total = result.store.get_runs()
        assert total == 3
        labels = sorted(r.label for r in runs)
        assert labels == ["admm@a0.5_0.5", "benchmark@a0.5_0.5", "ppdna@a0.5_0.5"]
        ppdna_run = next(r for r in runs if r.label.startswith("ppdna"))
        assert len(result.traces.query("solver == 'ppdna'")) == len(
            result.store.get_iterations(ppdna_run.run_id)
        )

    def test_matrix_only_has_dense_gamma(self):
        study = EfficiencyStudy(
            m=10, q=8, p=20, n=60, r=2, s=0.3, solver_set=(SolverChoice.PPDNA,), max_time=60.0
        )
        result = run_experiment(ExperimentConfig(scenario=study))
        assert result.tables["comparison"]["nonsparsity_gamma"].iloc[0] == 1.0

    def test_csv(self, tmp_path, data_factory):
        data = data_factory(2, n=40, m=3, q=2, p=4)
        pd.DataFrame(data.response).to_csv(tmp_path / "y.csv", index=False, header=False)
        pd.DataFrame(data.z_design).to_csv(tmp_path / "z.csv", index=False, header=False)
        pd.DataFrame(data.x_design).to_csv(tmp_path / "x.csv", index=False, header=False)
        study = CsvRun(
            y_path=tmp_path / "y.csv",
            z_path=tmp_path / "z.csv",
            x_path=tmp_path / "x.csv",
            m=3,
            q=2,
            solver_set=(SolverChoice.PPDNA, SolverChoice.APG),
            n_groups=2,
            max_time=60.0,
        )
        result = run_experiment(ExperimentConfig(scenario=study))
        assert result.kind == "csvrun"
        assert len(result.tables["comparison"]) == 2


class TestConsistency:
    """Tests for the sample-size ladder."""

    def test_ladder_must_increase(self):
        with pytest.raises(ValidationError):
            ConsistencyStudy(n_ladder=(200, 100))

    def test_tables_and_verdict(self):
        study = ConsistencyStudy(
            n_ladder=(40, 80), m=4, q=4, p=6, r=1, replications=2, penalty_scale=0.1, seed=3
        )
        result = run_consistency(study)
        ladder = result.tables["ladder"]
        assert ladder["n"].tolist() == [40, 80]
        assert len(result.tables["cells"]) == 4
        assert set(result.verdict) == {"error_b_decreasing", "error_gamma_decreasing"}
        assert "sqrt_n_error_b_mean" in ladder


class TestLoadConfig:
    """Tests for TOML experiment files."""

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "study.toml"
        path.write_text(
            'outdir = "out"\nworkers = 3\n\n[scenario]\nkind = "lowrank"\nr = 3\nscheme = "S3"\n'
        )
        config = load_config("lowrank", path, {"workers": None}, {"r": 4, "seed": 9})
        assert config.workers == 3
        assert str(config.outdir) == "out"
        assert isinstance(config.scenario, LowRankStudy)
        assert config.scenario.r == 4
        assert config.scenario.seed == 9
        assert config.scenario.scheme is GammaScheme.S3

    def test_kind_mismatch(self, tmp_path):
        path = tmp_path / "study.toml"
        path.write_text('[scenario]\nkind = "shapes"\n')
        with pytest.raises(ConfigError):
            load_config("lowrank", path)

    def test_unknown_field(self):
        with pytest.raises(ConfigError):
            load_config("shapes", scenario_overrides={"colour": "red"})

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "study.toml"
        path.write_text("[scenario\n")
        with pytest.raises(ConfigError):
            load_config("shapes", path)

    def test_paper_scale(self):
        config = load_config("shapes", overrides={"paper_scale": True}).resolved()
        assert config.scenario.replications == 100
        assert config.scenario.n_val == 3000
        assert config.scenario.grid.points == 20

    def test_paper_scale_comparison(self):
        config = load_config("efficiency", overrides={"paper_scale": True}).resolved()
        assert config.scenario.max_time == 3600.0
