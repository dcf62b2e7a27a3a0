"""Simulation studies: grid-search model selection, replications, solver
efficiency, consistency ladders and CSV runs.

Every study is described by a pydantic model with a ``kind`` tag so a whole
experiment fits in one TOML file::

    outdir = "results"
    workers = 4

    [scenario]
    kind = "shapes"
    shape = "circle"
    scheme = "S2"
    replications = 20
"""

from __future__ import annotations

import math
import tomllib
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Annotated, Any, Literal, TypeVar

import numpy as np
import pandas as pd
from numpy.random import Generator, SeedSequence
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)
from structlog.stdlib import get_logger

from .baselines import AdmmConfig, ApgConfig, solve_admm, solve_apg
from .datagen import (
    GammaScheme,
    ShapeKind,
    gen_gamma,
    gen_lowrank_matrix,
    gen_samples,
    gen_shape_matrix,
    gen_sparse_gamma,
    load_csv_dataset,
)
from .errors import ConfigError, SolverError
from .metrics import error_b, error_gamma, evaluate, nonsparsity, rank_estimate, rmse_y
from .model import (
    CoefficientPair,
    DesignData,
    ElementwiseL1,
    FusedLasso,
    Lasso,
    NuclearNorm,
    PenaltySpec,
    ProblemSpec,
    SparseGroupLasso,
    contiguous_groups,
    standardize_columns,
)
from .ppdna import PpdnaConfig, solve_ppdna
from .store import InMemoryTraceStore, SolverReport, SolverStatus, TraceStore
from .types import FloatArray

logger = get_logger(__name__)

R = TypeVar("R")


class Estimator(StrEnum):
    VML = "VML"
    NL = "NL"
    NFL = "NFL"
    NSGL = "NSGL"


class SolverChoice(StrEnum):
    PPDNA = "ppdna"
    ADMM = "admm"
    APG = "apg"


ALL_ESTIMATORS = (Estimator.VML, Estimator.NL, Estimator.NFL, Estimator.NSGL)


# --- configuration ---------------------------------------------------------


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha_min: PositiveFloat = 1e-3
    alpha_max: PositiveFloat = 1.0
    points: PositiveInt = 8
    log_scale: bool = True
    independent_fused: bool = False

    @model_validator(mode="after")
    def _check_range(self) -> GridSpec:
        if self.alpha_min > self.alpha_max:
            raise ValueError(f"alpha_min={self.alpha_min} exceeds alpha_max={self.alpha_max}")
        return self

    def values(self) -> FloatArray:
        if self.points == 1:
            return np.array([self.alpha_max])
        if self.log_scale:
            return np.geomspace(self.alpha_min, self.alpha_max, self.points)
        return np.linspace(self.alpha_min, self.alpha_max, self.points)


class SolverSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    ppdna: PpdnaConfig = Field(default_factory=PpdnaConfig)
    admm: AdmmConfig = Field(default_factory=AdmmConfig)
    apg: ApgConfig = Field(default_factory=ApgConfig)


class _Study(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 0

    def at_paper_scale(self) -> _Study:
        return self


class _ReplicationStudy(_Study):
    m: PositiveInt = 64
    q: PositiveInt = 64
    p: PositiveInt = 1000
    n: PositiveInt = 300
    n_val: PositiveInt = 1000
    n_test: PositiveInt | None = None
    noise_sd: NonNegativeFloat = 1.0
    scheme: GammaScheme = GammaScheme.S1
    estimators: tuple[Estimator, ...] = ALL_ESTIMATORS
    grid: GridSpec = Field(default_factory=GridSpec)
    replications: PositiveInt = 20
    solver: SolverChoice = SolverChoice.PPDNA
    solvers: SolverSettings = Field(default_factory=SolverSettings)

    def at_paper_scale(self) -> _ReplicationStudy:
        grid = self.grid.model_copy(update={"points": 20})
        return self.model_copy(update={"n_val": 3000, "grid": grid, "replications": 100})

    def truth_matrix(self, rng: Generator) -> FloatArray:
        raise NotImplementedError


class ShapeStudy(_ReplicationStudy):
    kind: Literal["shapes"] = "shapes"
    shape: ShapeKind = ShapeKind.SQUARE

    def truth_matrix(self, rng: Generator) -> FloatArray:
        return gen_shape_matrix(self.shape, self.m, self.q)


class LowRankStudy(_ReplicationStudy):
    kind: Literal["lowrank"] = "lowrank"
    r: PositiveInt = 5
    s: float = Field(0.1, gt=0.0, lt=1.0)

    def truth_matrix(self, rng: Generator) -> FloatArray:
        return gen_lowrank_matrix(self.m, self.q, self.r, self.s, rng)


class _SolverComparison(_Study):
    estimator: Estimator = Estimator.NL
    alphas: tuple[tuple[PositiveFloat, PositiveFloat], ...] = ((0.5, 0.5),)
    solver_set: tuple[SolverChoice, ...] = (SolverChoice.PPDNA, SolverChoice.ADMM)
    robj_tol: PositiveFloat = 1e-10
    max_time: PositiveFloat = 600.0
    benchmark_kkt_tol: PositiveFloat = 1e-10
    benchmark_max_outer: PositiveInt = 50
    n_groups: PositiveInt = 10
    solvers: SolverSettings = Field(
        default_factory=lambda: SolverSettings(
            ppdna=PpdnaConfig(kkt_tol=1e-14, max_outer=200),
            admm=AdmmConfig(kkt_tol=1e-14, max_iter=500_000),
            apg=ApgConfig(kkt_tol=1e-14, max_iter=500_000, check_every=50),
        )
    )

    def at_paper_scale(self) -> _SolverComparison:
        return self.model_copy(update={"max_time": 3600.0})


class EfficiencyStudy(_SolverComparison):
    kind: Literal["efficiency"] = "efficiency"
    m: PositiveInt = 100
    q: PositiveInt = 80
    p: PositiveInt = 100
    n: PositiveInt = 500
    r: PositiveInt = 5
    s: float = Field(0.1, gt=0.0, lt=1.0)
    gamma_nonsparsity: float = Field(0.01, ge=0.0, le=1.0)
    noise_sd: NonNegativeFloat = 1.0
    setting: Literal["matrix_only", "joint"] = "matrix_only"


class CsvRun(_SolverComparison):
    kind: Literal["csvrun"] = "csvrun"
    y_path: Path
    z_path: Path
    x_path: Path
    m: PositiveInt
    q: PositiveInt
    standardize: bool = True


class ConsistencyStudy(_Study):
    kind: Literal["consistency"] = "consistency"
    n_ladder: tuple[PositiveInt, ...] = (200, 800, 3200)
    m: PositiveInt = 10
    q: PositiveInt = 10
    p: PositiveInt = 20
    r: PositiveInt = 2
    s: float = Field(0.2, gt=0.0, lt=1.0)
    gamma_nonsparsity: float = Field(0.2, ge=0.0, le=1.0)
    noise_sd: NonNegativeFloat = 1.0
    penalty_scale: NonNegativeFloat = 1.0
    replications: PositiveInt = 20
    ppdna: PpdnaConfig = Field(default_factory=PpdnaConfig)

    @model_validator(mode="after")
    def _check_ladder(self) -> ConsistencyStudy:
        if list(self.n_ladder) != sorted(set(self.n_ladder)):
            raise ValueError("n_ladder must be strictly increasing")
        return self


Scenario = Annotated[
    ShapeStudy | LowRankStudy | EfficiencyStudy | ConsistencyStudy | CsvRun,
    Field(discriminator="kind"),
]
ReplicationStudy = ShapeStudy | LowRankStudy
ComparisonStudy = EfficiencyStudy | CsvRun


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: Scenario
    outdir: Path = Path("results")
    workers: PositiveInt = 1
    paper_scale: bool = False

    def resolved(self) -> ExperimentConfig:
        """The config with paper-scale sizes applied when requested."""
        if not self.paper_scale:
            return self
        return self.model_copy(update={"scenario": self.scenario.at_paper_scale()})


def load_config(
    kind: str,
    path: Path | None = None,
    overrides: dict[str, Any] | None = None,
    scenario_overrides: dict[str, Any] | None = None,
) -> ExperimentConfig:
    """Read a TOML experiment file (optional) and apply flag overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    scenario = dict(data.get("scenario", {}))
    if scenario.setdefault("kind", kind) != kind:
        raise ConfigError(f"config describes a {scenario['kind']!r} study, not {kind!r}")
    scenario.update({k: v for k, v in (scenario_overrides or {}).items() if v is not None})
    data["scenario"] = scenario
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


# --- penalties -----------------------------------------------------------


@dataclass(frozen=True)
class PenaltyLevels:
    rho: float
    lam: float
    lam_prime: float


def tuning_values(
    data: DesignData,
    estimator: Estimator,
    alpha1: float,
    alpha2: float,
    alpha2_prime: float | None = None,
) -> PenaltyLevels:
    """Penalty levels as fractions of the smallest levels that zero the solution."""
    xty = data.x_design.T @ data.response
    zty_max = float(np.max(np.abs(data.z_design.T @ data.response), initial=0.0))
    if estimator is Estimator.VML:
        rho = alpha1 * float(np.max(np.abs(xty), initial=0.0))
    else:
        rho = alpha1 * float(np.linalg.norm(data.xt_apply(data.response), 2))
    lam = alpha2 * zty_max
    lam_prime = (alpha2 if alpha2_prime is None else alpha2_prime) * zty_max
    return PenaltyLevels(rho, lam, lam_prime)


def build_penalty(
    estimator: Estimator,
    levels: PenaltyLevels,
    groups: Sequence[Sequence[int]] | None = None,
) -> PenaltySpec:
    match estimator:
        case Estimator.VML:
            return PenaltySpec(
                matrix_penalty=ElementwiseL1(rho=levels.rho),
                vector_penalty=Lasso(lam=levels.lam),
            )
        case Estimator.NL:
            return PenaltySpec(
                matrix_penalty=NuclearNorm(rho=levels.rho), vector_penalty=Lasso(lam=levels.lam)
            )
        case Estimator.NFL:
            return PenaltySpec(
                matrix_penalty=NuclearNorm(rho=levels.rho),
                vector_penalty=FusedLasso(lam=levels.lam, lam_prime=levels.lam_prime),
            )
        case Estimator.NSGL:
            if groups is None:
                raise ConfigError("NSGL needs a group partition")
            return PenaltySpec(
                matrix_penalty=NuclearNorm(rho=levels.rho),
                vector_penalty=SparseGroupLasso(
                    lam=levels.lam,
                    lam_prime=levels.lam_prime,
                    groups=tuple(tuple(int(i) for i in g) for g in groups),
                ),
            )
    raise ConfigError(f"unknown estimator {estimator!r}")


def run_solver(
    problem: ProblemSpec,
    solver: SolverChoice,
    settings: SolverSettings,
    *,
    warm_start: CoefficientPair | None = None,
    obj_star: float | None = None,
    store: TraceStore | None = None,
    label: str | None = None,
) -> tuple[CoefficientPair, SolverReport]:
    match solver:
        case SolverChoice.PPDNA:
            return solve_ppdna(
                problem, settings.ppdna, warm_start, obj_star=obj_star, store=store, label=label
            )
        case SolverChoice.ADMM:
            return solve_admm(problem, settings.admm, obj_star=obj_star, store=store, label=label)
        case SolverChoice.APG:
            return solve_apg(problem, settings.apg, obj_star=obj_star, store=store, label=label)
    raise ConfigError(f"unknown solver {solver!r}")


# --- model selection and replications --------------------------------------


@dataclass
class SelectionResult:
    estimator: Estimator
    coefficients: CoefficientPair
    alpha1: float
    alpha2: float
    alpha2_prime: float
    validation_rmse: float
    grid: list[dict[str, Any]]


def _grid_cells(grid: GridSpec, estimator: Estimator) -> list[tuple[float, float, float | None]]:
    # largest penalties first so each solve can warm start from a sparser neighbour
    values = [float(a) for a in grid.values()[::-1]]
    independent = grid.independent_fused and estimator in (Estimator.NFL, Estimator.NSGL)
    return [
        (a1, a2, a2p)
        for a1 in values
        for a2 in values
        for a2p in (values if independent else [None])
    ]


def run_model_selection(
    train: DesignData,
    validation: DesignData,
    estimator: Estimator,
    grid: GridSpec,
    *,
    groups: Sequence[Sequence[int]] | None = None,
    solver: SolverChoice = SolverChoice.PPDNA,
    settings: SolverSettings | None = None,
    store: TraceStore | None = None,
) -> SelectionResult:
    """Fit every grid cell on ``train`` and keep the one with the best validation RMSE.

    Solver failures are recorded in the grid table and skipped.
    """
    settings = settings or SolverSettings()
    rows: list[dict[str, Any]] = []
    best: SelectionResult | None = None
    warm: CoefficientPair | None = None
    for a1, a2, a2p in _grid_cells(grid, estimator):
        levels = tuning_values(train, estimator, a1, a2, a2p)
        problem = ProblemSpec(train, build_penalty(estimator, levels, groups))
        row: dict[str, Any] = {
            "estimator": str(estimator),
            "alpha1": a1,
            "alpha2": a2,
            "alpha2_prime": a2 if a2p is None else a2p,
            "rho": levels.rho,
            "lam": levels.lam,
            "lam_prime": levels.lam_prime,
        }
        try:
            coeff, report = run_solver(
                problem, solver, settings, warm_start=warm, store=store, label=str(estimator)
            )
        except SolverError as exc:
            logger.warning("grid cell failed", estimator=str(estimator), alpha1=a1, error=str(exc))
            rows.append(row | {"status": str(SolverStatus.FAILED), "validation_rmse": math.nan})
            continue
        warm = coeff
        rmse = rmse_y(validation, coeff)
        rows.append(
            row
            | {
                "status": str(report.status),
                "iterations": report.iterations,
                "eta_kkt": report.eta_kkt,
                "validation_rmse": rmse,
            }
        )
        if best is None or rmse < best.validation_rmse:
            best = SelectionResult(
                estimator, coeff, a1, a2, row["alpha2_prime"], rmse, rows
            )

    if best is None:
        raise SolverError("every grid cell failed", estimator=str(estimator), cells=len(rows))
    logger.info(
        "model selected",
        estimator=str(estimator),
        alpha1=best.alpha1,
        alpha2=best.alpha2,
        validation_rmse=best.validation_rmse,
    )
    return best


@dataclass
class ReplicationOutcome:
    replication: int
    rows: list[dict[str, Any]]
    grid: list[dict[str, Any]]
    b_true: FloatArray
    b_hats: dict[str, FloatArray]


def _replication_groups(study: ReplicationStudy) -> tuple[tuple[int, ...], ...]:
    return study.scheme.partition(study.p)


def run_replication(
    study: ReplicationStudy, replication: int, seed: SeedSequence
) -> ReplicationOutcome:
    """One independent draw of train, validation and test data, all estimators fitted."""
    rng = np.random.default_rng(seed)
    b_true = study.truth_matrix(rng)
    gamma_true = gen_gamma(study.scheme, study.p, rng)
    truth = CoefficientPair(b_true, gamma_true)
    train = gen_samples(b_true, gamma_true, study.n, rng, study.noise_sd)
    validation = gen_samples(b_true, gamma_true, study.n_val, rng, study.noise_sd)
    test = gen_samples(b_true, gamma_true, study.n_test or study.n, rng, study.noise_sd)
    groups = _replication_groups(study)

    rows: list[dict[str, Any]] = []
    grid: list[dict[str, Any]] = []
    b_hats: dict[str, FloatArray] = {}
    for estimator in study.estimators:
        base = {"replication": replication, "estimator": str(estimator)}
        try:
            selected = run_model_selection(
                train,
                validation,
                estimator,
                study.grid,
                groups=groups,
                solver=study.solver,
                settings=study.solvers,
            )
        except SolverError as exc:
            logger.warning("replication failed", replication=replication, error=str(exc))
            rows.append(base | {"status": str(SolverStatus.FAILED)})
            continue
        grid.extend({"replication": replication} | cell for cell in selected.grid)
        report = evaluate(test, truth, selected.coefficients)
        b_hats[str(estimator)] = np.asarray(selected.coefficients.b_mat)
        rows.append(
            base
            | report.as_row()
            | {"alpha1": selected.alpha1, "alpha2": selected.alpha2, "status": "ok"}
        )
    logger.info("replication finished", replication=replication, estimators=len(rows))
    return ReplicationOutcome(replication, rows, grid, b_true, b_hats)


def _map_tasks(fn: Callable[..., R], tasks: Iterable[tuple[Any, ...]], workers: int) -> list[R]:
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *task) for task in tasks]
        return [future.result() for future in futures]


def summarize(frame: pd.DataFrame, by: str, columns: Sequence[str]) -> pd.DataFrame:
    """Mean and sample standard deviation per group; a single replication has sd 0."""
    ok = frame[frame["status"] != str(SolverStatus.FAILED)] if "status" in frame else frame
    columns = [c for c in columns if c in ok]
    grouped = ok.groupby(by, sort=False)[list(columns)]
    means = grouped.mean().add_suffix("_mean")
    sds = grouped.std(ddof=1).fillna(0.0).add_suffix("_sd")
    table = pd.concat([means, sds], axis=1)
    ordered = [f"{c}_{stat}" for c in columns for stat in ("mean", "sd")]
    table = table[ordered]
    if "status" in frame:
        failures = (frame["status"] == str(SolverStatus.FAILED)).groupby(frame[by]).sum()
        table["failures"] = failures.reindex(table.index).fillna(0).astype(int)
    return table.reset_index()


@dataclass
class StudyResult:
    """Everything a study produced, ready for :func:`matreg.reports.emit_reports`."""

    kind: str
    seed: int
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    traces: pd.DataFrame | None = None
    heatmaps: dict[str, tuple[FloatArray, FloatArray]] = field(default_factory=dict)
    verdict: dict[str, bool] = field(default_factory=dict)
    store: TraceStore | None = None


def run_replications(study: ReplicationStudy, workers: int = 1) -> StudyResult:
    seeds = SeedSequence(study.seed).spawn(study.replications)
    outcomes = _map_tasks(
        run_replication, ((study, i, seed) for i, seed in enumerate(seeds)), workers
    )
    per_rep = pd.DataFrame([row for o in outcomes for row in o.rows])
    grid = pd.DataFrame([row for o in outcomes for row in o.grid])
    summary = summarize(per_rep, "estimator", ["rmse_y", "error_b", "error_gamma"])

    result = StudyResult(study.kind, study.seed)
    result.tables = {"summary": summary, "replications": per_rep, "grid": grid}
    first = outcomes[0]
    result.heatmaps = {name: (first.b_true, b_hat) for name, b_hat in first.b_hats.items()}
    return result


# --- solver comparisons ------------------------------------------------------


def _comparison_levels(
    study: _SolverComparison, data: DesignData, alpha1: float, alpha2: float
) -> PenaltyLevels:
    levels = tuning_values(data, study.estimator, alpha1, alpha2)
    if isinstance(study, EfficiencyStudy) and study.setting == "matrix_only":
        return PenaltyLevels(levels.rho, 0.0, 0.0)
    return levels


def _comparison_settings(study: _SolverComparison) -> SolverSettings:
    stops = {"robj_tol": study.robj_tol, "max_time": study.max_time}
    return SolverSettings(
        ppdna=study.solvers.ppdna.model_copy(update=stops),
        admm=study.solvers.admm.model_copy(update=stops),
        apg=study.solvers.apg.model_copy(update=stops),
    )


def compare_solvers(study: ComparisonStudy, data: DesignData) -> StudyResult:
    """Benchmark objective by a tight PPDNA run, then each solver against it."""
    groups = contiguous_groups(data.p, min(study.n_groups, data.p))
    settings = _comparison_settings(study)
    benchmark = study.solvers.ppdna.model_copy(
        update={"kkt_tol": study.benchmark_kkt_tol, "max_outer": study.benchmark_max_outer}
    )
    store = InMemoryTraceStore()
    rows: list[dict[str, Any]] = []
    traces: list[dict[str, Any]] = []
    for alpha1, alpha2 in study.alphas:
        levels = _comparison_levels(study, data, alpha1, alpha2)
        problem = ProblemSpec(data, build_penalty(study.estimator, levels, groups))
        cell = f"a{alpha1:g}_{alpha2:g}"
        _, bench = solve_ppdna(problem, benchmark, store=store, label=f"benchmark@{cell}")
        obj_star = bench.objective
        logger.info("benchmark objective", alpha1=alpha1, alpha2=alpha2, obj_star=obj_star)

        for solver in study.solver_set:
            base = {"alpha1": alpha1, "alpha2": alpha2, "solver": str(solver)}
            try:
                coeff, report = run_solver(
                    problem,
                    solver,
                    settings,
                    obj_star=obj_star,
                    store=store,
                    label=f"{solver}@{cell}",
                )
            except SolverError as exc:
                logger.warning("solver failed", solver=str(solver), error=str(exc))
                rows.append(base | {"status": str(SolverStatus.FAILED)})
                continue
            last = report.trace[-1].rel_obj if report.trace else None
            rows.append(
                base
                | {
                    "status": str(report.status),
                    "censored": report.status is SolverStatus.TIMEOUT,
                    "iterations": report.iterations,
                    "inner_iterations": report.inner_iterations,
                    "rel_obj": last,
                    "eta_kkt": report.eta_kkt,
                    "time": report.elapsed,
                    "rank_hat": rank_estimate(coeff.b_mat),
                    "nonsparsity_gamma": nonsparsity(coeff.gamma_vec),
                }
            )
            traces.extend(
                base | {"iteration": r.iteration, "elapsed": r.elapsed, "rel_obj": r.rel_obj}
                for r in store.get_iterations(report.run_id)
            )

    result = StudyResult(study.kind, study.seed, store=store)
    result.tables = {"comparison": pd.DataFrame(rows)}
    result.traces = pd.DataFrame(traces)
    return result


def efficiency_data(study: EfficiencyStudy) -> DesignData:
    rng = np.random.default_rng(study.seed)
    b_true = gen_lowrank_matrix(study.m, study.q, study.r, study.s, rng)
    gamma_true = gen_sparse_gamma(study.p, study.gamma_nonsparsity, rng)
    return gen_samples(b_true, gamma_true, study.n, rng, study.noise_sd)


def run_efficiency(study: EfficiencyStudy) -> StudyResult:
    return compare_solvers(study, efficiency_data(study))


def run_csv(study: CsvRun) -> StudyResult:
    data = load_csv_dataset(study.y_path, study.z_path, study.x_path, study.m, study.q)
    if study.standardize:
        data, _ = standardize_columns(data, also_response=True)
    return compare_solvers(study, data)


# --- consistency ---------------------------------------------------------------


def consistency_truth(study: ConsistencyStudy) -> CoefficientPair:
    rng = np.random.default_rng(SeedSequence(study.seed).spawn(1)[0])
    b_true = gen_lowrank_matrix(study.m, study.q, study.r, study.s, rng)
    return CoefficientPair(b_true, gen_sparse_gamma(study.p, study.gamma_nonsparsity, rng))


def run_consistency_cell(
    study: ConsistencyStudy, truth: CoefficientPair, n: int, replication: int, seed: SeedSequence
) -> dict[str, Any]:
    rng = np.random.default_rng(seed)
    data = gen_samples(truth.b_mat, truth.gamma_vec, n, rng, study.noise_sd)
    level = study.penalty_scale * math.sqrt(n)
    penalty = build_penalty(Estimator.NL, PenaltyLevels(level, level, level))
    base = {"n": n, "replication": replication}
    try:
        coeff, report = solve_ppdna(ProblemSpec(data, penalty), study.ppdna)
    except SolverError as exc:
        logger.warning("consistency cell failed", n=n, replication=replication, error=str(exc))
        return base | {"status": str(SolverStatus.FAILED)}
    eb = error_b(truth.b_mat, coeff.b_mat)
    eg = error_gamma(truth.gamma_vec, coeff.gamma_vec)
    root = math.sqrt(n)
    return base | {
        "status": str(report.status),
        "error_b": eb,
        "error_gamma": eg,
        "sqrt_n_error_b": root * eb,
        "sqrt_n_error_gamma": root * eg,
    }


def run_consistency(study: ConsistencyStudy, workers: int = 1) -> StudyResult:
    """Average estimation errors along a ladder of sample sizes with ``rho = lam = c sqrt(n)``."""
    truth = consistency_truth(study)
    seeds = SeedSequence(study.seed).spawn(1 + len(study.n_ladder) * study.replications)[1:]
    tasks = [
        (study, truth, n, rep, seeds[i * study.replications + rep])
        for i, n in enumerate(study.n_ladder)
        for rep in range(study.replications)
    ]
    cells = pd.DataFrame(_map_tasks(run_consistency_cell, tasks, workers))
    table = summarize(
        cells, "n", ["error_b", "error_gamma", "sqrt_n_error_b", "sqrt_n_error_gamma"]
    )

    def decreasing(column: str) -> bool:
        means = table[column].to_numpy()
        return bool(np.all(np.diff(means) < 0))

    result = StudyResult(study.kind, study.seed)
    result.tables = {"ladder": table, "cells": cells}
    result.verdict = {
        "error_b_decreasing": decreasing("error_b_mean"),
        "error_gamma_decreasing": decreasing("error_gamma_mean"),
    }
    logger.info("consistency ladder finished", **result.verdict)
    return result


def run_experiment(config: ExperimentConfig) -> StudyResult:
    config = config.resolved()
    scenario = config.scenario
    logger.info("running study", kind=scenario.kind, seed=scenario.seed, workers=config.workers)
    match scenario:
        case ShapeStudy() | LowRankStudy():
            return run_replications(scenario, config.workers)
        case EfficiencyStudy():
            return run_efficiency(scenario)
        case ConsistencyStudy():
            return run_consistency(scenario, config.workers)
        case CsvRun():
            return run_csv(scenario)
    raise ConfigError(f"unknown scenario {scenario!r}")
