"""Timestamped iteration recording for solver runs."""

from __future__ import annotations

import time
import uuid
from datetime import datetime, timezone
from typing import Any

from structlog.stdlib import get_logger

from .metrics import rel_obj
from .store import IterationRecord, KktResiduals, RunRecord, SolverReport, SolverStatus, TraceStore

logger = get_logger(__name__)


class TraceRecorder:
    """Collects iteration records for one solver run and exports them to a store."""

    def __init__(
        self,
        solver: str,
        store: TraceStore | None = None,
        obj_star: float | None = None,
        label: str | None = None,
    ):
        self.solver = solver
        self.store = store
        self.obj_star = obj_star
        self.label = label
        self.run_id = uuid.uuid4().hex[:16]
        self.started_at = datetime.now(timezone.utc)
        self.trace: list[IterationRecord] = []
        self._t0 = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self._t0

    def expired(self, max_time: float | None) -> bool:
        return max_time is not None and self.elapsed > max_time

    def target_reached(self, record: IterationRecord, robj_tol: float) -> bool:
        """Whether ``record`` is within ``robj_tol`` of the benchmark objective."""
        return robj_tol > 0 and record.rel_obj is not None and record.rel_obj < robj_tol

    def record(
        self, iteration: int, objective: float, eta_kkt: float | None = None, **extra: Any
    ) -> IterationRecord:
        record = IterationRecord(
            run_id=self.run_id,
            solver=self.solver,
            iteration=iteration,
            elapsed=self.elapsed,
            objective=objective,
            eta_kkt=eta_kkt,
            rel_obj=rel_obj(objective, self.obj_star) if self.obj_star is not None else None,
            extra=extra or None,
        )
        self.trace.append(record)
        if self.store is not None:
            self.store.insert_iteration(record)
        logger.debug(
            "solver iteration",
            solver=self.solver,
            iteration=iteration,
            objective=objective,
            eta_kkt=eta_kkt,
            rel_obj=record.rel_obj,
        )
        return record

    def finish(
        self,
        status: SolverStatus,
        *,
        iterations: int,
        objective: float,
        kkt: KktResiduals,
        inner_iterations: int = 0,
        message: str | None = None,
    ) -> SolverReport:
        elapsed = self.elapsed
        report = SolverReport(
            run_id=self.run_id,
            solver=self.solver,
            status=status,
            iterations=iterations,
            inner_iterations=inner_iterations,
            objective=objective,
            kkt=kkt,
            elapsed=elapsed,
            trace=self.trace,
            message=message,
        )
        if self.store is not None:
            self.store.insert_run(
                RunRecord(
                    run_id=self.run_id,
                    solver=self.solver,
                    started_at=self.started_at,
                    elapsed=elapsed,
                    status=status,
                    iterations=iterations,
                    objective=objective,
                    eta_kkt=kkt.eta,
                    label=self.label,
                )
            )
        logger.info(
            "solver finished",
            solver=self.solver,
            status=str(status),
            iterations=iterations,
            inner_iterations=inner_iterations,
            objective=objective,
            eta_kkt=kkt.eta,
            elapsed=round(elapsed, 4),
        )
        return report
