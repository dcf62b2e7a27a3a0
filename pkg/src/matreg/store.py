"""Solver run records and a pluggable store for iteration traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import StrEnum
from typing import Any, Protocol, runtime_checkable


class SolverStatus(StrEnum):
    CONVERGED = "converged"
    TARGET_REACHED = "target_reached"
    MAX_ITER = "max_iter"
    TIMEOUT = "timeout"
    FAILED = "failed"


@dataclass(frozen=True)
class KktResiduals:
    r_p: float
    r_d: float
    r_c: float

    @property
    def eta(self) -> float:
        return max(self.r_p, self.r_d, self.r_c)


@dataclass
class IterationRecord:
    run_id: str
    solver: str
    iteration: int
    elapsed: float
    objective: float
    eta_kkt: float | None = None
    rel_obj: float | None = None
    extra: dict[str, Any] | None = None


@dataclass
class SolverReport:
    run_id: str
    solver: str
    status: SolverStatus
    iterations: int
    inner_iterations: int
    objective: float
    kkt: KktResiduals
    elapsed: float
    trace: list[IterationRecord] = field(default_factory=list)
    message: str | None = None

    @property
    def eta_kkt(self) -> float:
        return self.kkt.eta


@dataclass
class RunRecord:
    run_id: str
    solver: str
    started_at: datetime
    elapsed: float
    status: SolverStatus
    iterations: int
    objective: float
    eta_kkt: float
    label: str | None = None


@dataclass
class StoreSummary:
    run_count: int
    failure_count: int
    converged_rate: float
    avg_elapsed: float
    recent_runs: list[RunRecord]


@runtime_checkable
class TraceStore(Protocol):
    """Protocol for solver trace storage."""

    def insert_run(self, run: RunRecord) -> None: ...
    def insert_iteration(self, record: IterationRecord) -> None: ...

    def get_runs(
        self, page: int = 1, per_page: int = 50, status: SolverStatus | None = None
    ) -> tuple[list[RunRecord], int]: ...
    def get_run(self, run_id: str) -> RunRecord | None: ...
    def get_iterations(self, run_id: str) -> list[IterationRecord]: ...

    def get_summary(self) -> StoreSummary: ...


@dataclass
class InMemoryTraceStore:
    """Keeps every run and iteration in process memory."""

    runs: dict[str, RunRecord] = field(default_factory=dict)
    iterations: list[IterationRecord] = field(default_factory=list)

    def insert_run(self, run: RunRecord) -> None:
        self.runs[run.run_id] = run

    def insert_iteration(self, record: IterationRecord) -> None:
        self.iterations.append(record)

    def get_runs(
        self, page: int = 1, per_page: int = 50, status: SolverStatus | None = None
    ) -> tuple[list[RunRecord], int]:
        runs = list(self.runs.values())
        if status:
            runs = [r for r in runs if r.status == status]
        runs.sort(key=lambda r: r.started_at, reverse=True)

        total = len(runs)
        start = (page - 1) * per_page
        return runs[start : start + per_page], total

    def get_run(self, run_id: str) -> RunRecord | None:
        return self.runs.get(run_id)

    def get_iterations(self, run_id: str) -> list[IterationRecord]:
        records = [r for r in self.iterations if r.run_id == run_id]
        records.sort(key=lambda r: r.iteration)
        return records

    def get_summary(self) -> StoreSummary:
        runs = list(self.runs.values())
        run_count = len(runs)
        failure_count = sum(1 for r in runs if r.status == SolverStatus.FAILED)
        converged = sum(
            1 for r in runs if r.status in (SolverStatus.CONVERGED, SolverStatus.TARGET_REACHED)
        )
        return StoreSummary(
            run_count=run_count,
            failure_count=failure_count,
            converged_rate=(converged / run_count) if run_count else 0.0,
            avg_elapsed=(sum(r.elapsed for r in runs) / run_count) if run_count else 0.0,
            recent_runs=sorted(runs, key=lambda r: r.started_at, reverse=True)[:10],
        )
