"""Preconditioned proximal point outer loop with semismooth Newton subproblem solves."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    model_validator,
)
from structlog.stdlib import get_logger

from .errors import SolverError
from .model import CoefficientPair, ProblemSpec, objective
from .prox import prox_squared_loss_scaled
from .recorder import TraceRecorder
from .ssn import SsnConfig, solve_ssn
from .store import KktResiduals, SolverReport, SolverStatus, TraceStore
from .subproblem import DualEvaluation, OuterState, evaluate_dual
from .types import FloatArray

logger = get_logger(__name__)


class PpdnaConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    nu: PositiveFloat = 1.0
    sigma0: PositiveFloat = 1.0
    sigma_max: PositiveFloat = 1e6
    sigma_growth: float = Field(3.0, ge=1.0)
    eps0: PositiveFloat = 0.1
    eps_decay: float = Field(0.5, gt=0.0, lt=1.0)
    kkt_tol: PositiveFloat = 1e-6
    max_outer: PositiveInt = 100
    robj_tol: NonNegativeFloat = 0.0
    max_time: PositiveFloat | None = None
    inner: SsnConfig = Field(default_factory=SsnConfig)

    @model_validator(mode="after")
    def _check_sigma_range(self) -> PpdnaConfig:
        if self.sigma0 > self.sigma_max:
            raise ValueError(f"sigma0={self.sigma0} exceeds sigma_max={self.sigma_max}")
        return self

    def eps(self, k: int) -> float:
        """Inexactness level of outer iteration ``k``; the sequence is summable."""
        return self.eps0 * self.eps_decay**k


def primal_update(
    state: OuterState, xi_new: FloatArray | DualEvaluation, config: PpdnaConfig
) -> OuterState:
    """Move to the three prox points at ``xi_new`` and grow ``sigma``."""
    evaluation = xi_new if isinstance(xi_new, DualEvaluation) else evaluate_dual(state, xi_new)
    return replace(
        state,
        b_mat=evaluation.b_eval.value,
        gamma_vec=evaluation.gamma_eval.value,
        s_vec=evaluation.s_value,
        xi_vec=evaluation.xi,
        sigma=min(config.sigma_growth * state.sigma, config.sigma_max),
        iteration=state.iteration + 1,
    )


@dataclass(frozen=True, eq=False)
class DualVariables:
    """Multipliers of the split formulation; PPDNA reconstructs them from ``xi``."""

    u_mat: FloatArray
    beta: FloatArray
    w: FloatArray


def _relative(a: FloatArray, scale: FloatArray) -> float:
    return float(np.linalg.norm(a)) / (1.0 + float(np.linalg.norm(scale)))


def kkt_residuals(
    problem: ProblemSpec,
    coeff: CoefficientPair,
    s: FloatArray,
    xi: FloatArray,
    duals: DualVariables | None = None,
) -> KktResiduals:
    """Primal infeasibility, dual infeasibility and complementarity residuals."""
    data = problem.data
    xt_xi = data.xt_apply(xi)
    zt_xi = data.z_design.T @ xi
    if duals is None:
        duals = DualVariables(-xt_xi, -zt_xi, np.asarray(xi, dtype=np.float64))
    b_mat, gamma = coeff.b_mat, coeff.gamma_vec

    fitted = data.x_apply(b_mat) + data.z_design @ gamma
    r_p = _relative(fitted - s, s)
    r_d = max(
        _relative(xt_xi + duals.u_mat, duals.u_mat),
        _relative(zt_xi + duals.beta, duals.beta),
        _relative(duals.w - xi, xi),
    )
    r_c = max(
        _relative(problem.phi.prox(b_mat + duals.u_mat, 1.0).value - b_mat, b_mat),
        _relative(problem.psi.prox(gamma + duals.beta, 1.0).value - gamma, gamma),
        _relative(prox_squared_loss_scaled(s + duals.w, data.response, 1.0) - s, s),
    )
    return KktResiduals(r_p, r_d, r_c)


def solve_ppdna(
    problem: ProblemSpec,
    config: PpdnaConfig | None = None,
    warm_start: CoefficientPair | None = None,
    *,
    obj_star: float | None = None,
    store: TraceStore | None = None,
    label: str | None = None,
) -> tuple[CoefficientPair, SolverReport]:
    """Run the outer proximal point loop until the KKT residual drops below
    ``kkt_tol``, the objective reaches ``robj_tol`` of ``obj_star``, time runs out
    or ``max_outer`` iterations pass."""
    config = config or PpdnaConfig()
    recorder = TraceRecorder("ppdna", store=store, obj_star=obj_star, label=label)
    state = OuterState.initial(problem, config.sigma0, config.nu, warm_start)

    coeff = state.coefficients
    kkt = kkt_residuals(problem, coeff, state.s_vec, state.xi_vec)
    obj = objective(problem, coeff)
    inner_total = 0
    # a warm start or a zero solution may already satisfy the tolerance
    converged_at_start = kkt.eta < config.kkt_tol
    status = SolverStatus.CONVERGED if converged_at_start else SolverStatus.MAX_ITER
    for k in range(0 if converged_at_start else config.max_outer):
        eps = config.eps(k)
        try:
            result = solve_ssn(state, config.inner, eps)
        except SolverError as exc:
            logger.warning("inner solve failed", outer_iteration=k, error=str(exc))
            recorder.finish(
                SolverStatus.FAILED,
                iterations=k,
                objective=obj,
                kkt=kkt,
                inner_iterations=inner_total,
                message=str(exc),
            )
            raise SolverError(
                f"inner solve failed at outer iteration {k}", outer_iteration=k, **exc.diagnostics
            ) from exc

        inner_total += result.newton_steps
        state = primal_update(state, result.evaluation, config)
        coeff = state.coefficients
        kkt = kkt_residuals(problem, coeff, state.s_vec, state.xi_vec)
        obj = objective(problem, coeff)
        record = recorder.record(
            state.iteration,
            obj,
            kkt.eta,
            dual_objective=result.evaluation.value,
            inner_iterations=result.newton_steps,
            sigma=state.sigma,
        )
        if kkt.eta < config.kkt_tol:
            status = SolverStatus.CONVERGED
            break
        if recorder.target_reached(record, config.robj_tol):
            status = SolverStatus.TARGET_REACHED
            break
        if recorder.expired(config.max_time):
            status = SolverStatus.TIMEOUT
            break

    report = recorder.finish(
        status,
        iterations=state.iteration,
        objective=obj,
        kkt=kkt,
        inner_iterations=inner_total,
    )
    return coeff, report
