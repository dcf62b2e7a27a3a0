"""CSV tables, static plots and a reproducibility manifest for a finished study."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from pydantic import BaseModel  # noqa: E402
from structlog.stdlib import get_logger  # noqa: E402

from . import __version__  # noqa: E402
from .experiments import StudyResult  # noqa: E402
from .store import RunRecord, TraceStore  # noqa: E402

logger = get_logger(__name__)

# log axes cannot show an exact zero gap
REL_OBJ_FLOOR = 1e-16


def canonical_json(obj: Any) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, separators=(", ", ": ")) + "\n").encode()


def config_hash(config: BaseModel) -> str:
    return hashlib.sha256(canonical_json(config.model_dump(mode="json"))).hexdigest()


def _prefix(result: StudyResult) -> str:
    return f"{result.kind}_seed{result.seed}"


def _all_runs(store: TraceStore, per_page: int = 100) -> list[RunRecord]:
    runs, total = store.get_runs(page=1, per_page=per_page)
    page = 1
    while len(runs) < total:
        page += 1
        more, _ = store.get_runs(page=page, per_page=per_page)
        if not more:
            break
        runs += more
    return runs


def _plot_traces(result: StudyResult, outdir: Path) -> list[Path]:
    traces = result.traces
    if traces is None or traces.empty or "rel_obj" not in traces:
        return []
    written = []
    for (alpha1, alpha2), frame in traces.groupby(["alpha1", "alpha2"], sort=False):
        fig, ax = plt.subplots(figsize=(6, 4))
        for solver, runs in frame.groupby("solver", sort=False):
            gap = np.maximum(runs["rel_obj"].to_numpy(dtype=float), REL_OBJ_FLOOR)
            ax.semilogy(runs["elapsed"], gap, label=str(solver))
        ax.set_xlabel("time (s)")
        ax.set_ylabel("relative objective gap")
        ax.set_title(f"alpha = ({alpha1:g}, {alpha2:g})")
        ax.legend()
        path = outdir / f"{_prefix(result)}_robj_a{alpha1:g}_{alpha2:g}.png"
        fig.savefig(path, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def _plot_heatmaps(result: StudyResult, outdir: Path) -> list[Path]:
    written = []
    for estimator, (b_true, b_hat) in result.heatmaps.items():
        fig, (left, right) = plt.subplots(1, 2, figsize=(8, 4))
        for ax, mat, title in ((left, b_true, "true"), (right, b_hat, estimator)):
            image = ax.imshow(mat, cmap="viridis")
            ax.set_title(title)
            ax.set_xticks([])
            ax.set_yticks([])
            fig.colorbar(image, ax=ax, fraction=0.046)
        path = outdir / f"{_prefix(result)}_heatmap_{estimator}.png"
        fig.savefig(path, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def emit_reports(result: StudyResult, config: BaseModel, outdir: Path) -> list[Path]:
    """Write every table as CSV, the plots, and ``manifest.json``; return the paths."""
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {outdir}: {exc}") from exc

    written: list[Path] = []
    for name, table in result.tables.items():
        path = outdir / f"{_prefix(result)}_{name}.csv"
        table.to_csv(path, index=False)
        written.append(path)
    if result.traces is not None and not result.traces.empty:
        path = outdir / f"{_prefix(result)}_traces.csv"
        result.traces.to_csv(path, index=False)
        written.append(path)
    solver_runs = None
    if result.store is not None:
        runs = _all_runs(result.store)
        if runs:
            path = outdir / f"{_prefix(result)}_runs.csv"
            pd.DataFrame([asdict(r) for r in runs]).to_csv(path, index=False)
            written.append(path)
        summary = result.store.get_summary()
        solver_runs = {
            "run_count": summary.run_count,
            "failure_count": summary.failure_count,
            "converged_rate": summary.converged_rate,
            "avg_elapsed": summary.avg_elapsed,
        }
    written += _plot_traces(result, outdir)
    written += _plot_heatmaps(result, outdir)

    manifest = {
        "matreg_version": __version__,
        "created_at": datetime.now(timezone.utc).replace(microsecond=0).isoformat(),
        "kind": result.kind,
        "seed": result.seed,
        "config": config.model_dump(mode="json"),
        "config_sha256": config_hash(config),
        "verdict": result.verdict,
        "solver_runs": solver_runs,
        "files": [p.name for p in written],
    }
    manifest_path = outdir / "manifest.json"
    manifest_path.write_bytes(canonical_json(manifest))
    written.append(manifest_path)
    logger.info("reports written", outdir=str(outdir), files=len(written))
    return written
