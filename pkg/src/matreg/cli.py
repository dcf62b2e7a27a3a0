"""Command line entry point: one subcommand per study."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import click
from pydantic import ValidationError
from structlog.stdlib import get_logger

from .datagen import GammaScheme, ShapeKind
from .errors import ConfigError, CsvFormatError, DimensionError, NonFiniteError, SolverError
from .experiments import SolverChoice, load_config, run_experiment
from .reports import emit_reports
from .settings import MatregSettings, configure_logging

logger = get_logger(__name__)

EXIT_CONFIG = 2
EXIT_SOLVER = 3


@dataclass
class GlobalOptions:
    config_path: Path | None
    seed: int | None
    outdir: Path | None
    paper_scale: bool | None
    workers: int | None
    settings: MatregSettings


def _run(ctx: click.Context, kind: str, **scenario: Any) -> None:
    opts: GlobalOptions = ctx.obj
    if opts.seed is not None:
        scenario["seed"] = opts.seed
    # flags beat MATREG_ variables, which beat the config file
    from_env = opts.settings.model_dump(include=opts.settings.model_fields_set)
    overrides = {
        "outdir": opts.outdir or from_env.get("outdir"),
        "workers": opts.workers or from_env.get("workers"),
        "paper_scale": opts.paper_scale,
    }
    try:
        config = load_config(kind, opts.config_path, overrides, scenario)
        result = run_experiment(config)
        written = emit_reports(result, config, config.outdir)
    except (ConfigError, ValidationError, CsvFormatError, DimensionError, NonFiniteError) as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    except SolverError as exc:
        logger.error("solver failure", error=str(exc), **exc.diagnostics)
        click.echo(f"solver failure: {exc}", err=True)
        ctx.exit(EXIT_SOLVER)
    for path in written:
        click.echo(str(path))


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="TOML experiment file",
)
@click.option("--seed", type=int, help="Master seed of the study")
@click.option("--outdir", type=click.Path(file_okay=False, path_type=Path), help="Output directory")
@click.option("--paper-scale", is_flag=True, default=None, help="Use the full published sizes")
@click.option("--workers", type=click.IntRange(min=1), help="Worker processes for replications")
@click.option(
    "--log-level",
    type=click.Choice(["debug", "info", "warning", "error"]),
    help="Overrides MATREG_LOG_LEVEL",
)
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Path | None,
    seed: int | None,
    outdir: Path | None,
    paper_scale: bool | None,
    workers: int | None,
    log_level: str | None,
) -> None:
    """Regularized matrix + vector regression studies."""
    settings = MatregSettings()
    configure_logging(log_level or settings.log_level, settings.log_json)
    ctx.obj = GlobalOptions(config_path, seed, outdir, paper_scale, workers, settings)


@cli.command()
@click.option("--shape", type=click.Choice([s.value for s in ShapeKind]))
@click.option("--scheme", type=click.Choice([s.value for s in GammaScheme]))
@click.option("--replications", type=click.IntRange(min=1))
@click.pass_context
def shapes(
    ctx: click.Context, shape: str | None, scheme: str | None, replications: int | None
) -> None:
    """Shape-signal replications with grid-search model selection."""
    _run(ctx, "shapes", shape=shape, scheme=scheme, replications=replications)


@cli.command()
@click.option("--rank", "r", type=click.IntRange(min=1))
@click.option("--scheme", type=click.Choice([s.value for s in GammaScheme]))
@click.option("--replications", type=click.IntRange(min=1))
@click.pass_context
def lowrank(
    ctx: click.Context, r: int | None, scheme: str | None, replications: int | None
) -> None:
    """Low-rank-signal replications with grid-search model selection."""
    _run(ctx, "lowrank", r=r, scheme=scheme, replications=replications)


@cli.command()
@click.option(
    "--solver",
    "solver_set",
    multiple=True,
    type=click.Choice([s.value for s in SolverChoice]),
    help="Repeat to compare several solvers",
)
@click.option("--setting", type=click.Choice(["matrix_only", "joint"]))
@click.pass_context
def efficiency(ctx: click.Context, solver_set: tuple[str, ...], setting: str | None) -> None:
    """Time each solver to a relative objective gap against a tight PPDNA benchmark."""
    _run(ctx, "efficiency", solver_set=solver_set or None, setting=setting)


@cli.command()
@click.option("--replications", type=click.IntRange(min=1))
@click.pass_context
def consistency(ctx: click.Context, replications: int | None) -> None:
    """Estimation error along a ladder of sample sizes."""
    _run(ctx, "consistency", replications=replications)


@cli.command()
@click.option("--y", "y_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--z", "z_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--x", "x_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--m", type=click.IntRange(min=1))
@click.option("--q", type=click.IntRange(min=1))
@click.pass_context
def csvrun(
    ctx: click.Context,
    y_path: Path | None,
    z_path: Path | None,
    x_path: Path | None,
    m: int | None,
    q: int | None,
) -> None:
    """Solver comparison on standardized CSV data."""
    _run(ctx, "csvrun", y_path=y_path, z_path=z_path, x_path=x_path, m=m, q=q)


def main() -> None:
    cli()
