"""Reference solvers: dual ADMM with a cached Cholesky factor, and FISTA with restart."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    field_validator,
)
from scipy import linalg
from structlog.stdlib import get_logger

from .errors import NonFiniteError
from .metrics import rel_obj
from .model import CoefficientPair, ProblemSpec, design_lipschitz, objective
from .ppdna import DualVariables, kkt_residuals
from .prox import prox_squared_loss_scaled
from .recorder import TraceRecorder
from .store import KktResiduals, SolverReport, SolverStatus, TraceStore
from .types import FloatArray

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "ApgConfig",
    "rel_obj",
    "solve_admm",
    "solve_apg",
    "xi_update",
]

logger = get_logger(__name__)

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


class AdmmConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma: PositiveFloat = 1.0
    step_tau: float = Field(1.618, gt=0.0)
    max_iter: PositiveInt = 20000
    kkt_tol: PositiveFloat = 1e-6
    robj_tol: NonNegativeFloat = 0.0
    check_every: PositiveInt = 1
    max_time: PositiveFloat | None = None

    @field_validator("step_tau")
    @classmethod
    def _below_golden_ratio(cls, v: float) -> float:
        if v >= GOLDEN_RATIO:
            raise ValueError(f"step_tau must be below {GOLDEN_RATIO:.6f}, got {v}")
        return v


@dataclass(eq=False)
class AdmmState:
    """All seven ADMM variables plus the factor of ``I + X X^T + Z Z^T``."""

    xi: FloatArray
    w: FloatArray
    u_mat: FloatArray
    beta: FloatArray
    b_mat: FloatArray
    gamma_vec: FloatArray
    s_vec: FloatArray
    factor: tuple[FloatArray, bool]

    @classmethod
    def initial(cls, problem: ProblemSpec) -> AdmmState:
        data = problem.data
        n, (m, q), p = data.n, data.shape, data.p
        gram = np.eye(n) + data.x_design @ data.x_design.T + data.z_design @ data.z_design.T
        try:
            factor = linalg.cho_factor(gram, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NonFiniteError("cannot factor I + XX^T + ZZ^T") from exc
        return cls(
            xi=np.zeros(n),
            w=np.zeros(n),
            u_mat=np.zeros((m, q)),
            beta=np.zeros(p),
            b_mat=np.zeros((m, q)),
            gamma_vec=np.zeros(p),
            s_vec=np.zeros(n),
            factor=factor,
        )

    @property
    def coefficients(self) -> CoefficientPair:
        return CoefficientPair(self.b_mat, self.gamma_vec)

    @property
    def duals(self) -> DualVariables:
        return DualVariables(self.u_mat, self.beta, self.w)


def xi_update(
    problem: ProblemSpec, state: AdmmState, sigma: float
) -> tuple[FloatArray, FloatArray]:
    """Solve ``(I + X X^T + Z Z^T) xi = rhs`` with the cached factor; returns ``(xi, rhs)``."""
    data = problem.data
    rhs = (
        data.x_apply(state.b_mat / sigma - state.u_mat)
        + data.z_design @ (state.gamma_vec / sigma - state.beta)
        + state.w
        - state.s_vec / sigma
    )
    return linalg.cho_solve(state.factor, rhs, check_finite=False), rhs


def _admm_step(problem: ProblemSpec, state: AdmmState, config: AdmmConfig) -> None:
    data = problem.data
    sigma = config.sigma
    state.xi, _ = xi_update(problem, state, sigma)
    xi = state.xi
    xt_xi = data.xt_apply(xi)
    zt_xi = data.z_design.T @ xi

    # Moreau decomposition of each conjugate prox
    loss_point = sigma * xi + state.s_vec
    state.w = (loss_point - prox_squared_loss_scaled(loss_point, data.response, sigma)) / sigma
    b_point = state.b_mat - sigma * xt_xi
    state.u_mat = (b_point - problem.phi.prox(b_point, sigma).value) / sigma
    g_point = state.gamma_vec - sigma * zt_xi
    state.beta = (g_point - problem.psi.prox(g_point, sigma).value) / sigma

    step = config.step_tau * sigma
    state.b_mat = state.b_mat - step * (xt_xi + state.u_mat)
    state.gamma_vec = state.gamma_vec - step * (zt_xi + state.beta)
    state.s_vec = state.s_vec - step * (state.w - xi)


def solve_admm(
    problem: ProblemSpec,
    config: AdmmConfig | None = None,
    *,
    obj_star: float | None = None,
    store: TraceStore | None = None,
    label: str | None = None,
) -> tuple[CoefficientPair, SolverReport]:
    config = config or AdmmConfig()
    recorder = TraceRecorder("admm", store=store, obj_star=obj_star, label=label)
    state = AdmmState.initial(problem)

    status = SolverStatus.MAX_ITER
    kkt: KktResiduals | None = None
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        _admm_step(problem, state, config)
        if iteration % config.check_every and iteration != config.max_iter:
            continue
        coeff = state.coefficients
        kkt = kkt_residuals(problem, coeff, state.s_vec, state.xi, state.duals)
        record = recorder.record(iteration, objective(problem, coeff), kkt.eta)
        if kkt.eta < config.kkt_tol:
            status = SolverStatus.CONVERGED
            break
        if recorder.target_reached(record, config.robj_tol):
            status = SolverStatus.TARGET_REACHED
            break
        if recorder.expired(config.max_time):
            status = SolverStatus.TIMEOUT
            break

    coeff = state.coefficients
    if kkt is None:
        kkt = kkt_residuals(problem, coeff, state.s_vec, state.xi, state.duals)
    report = recorder.finish(
        status, iterations=iteration, objective=objective(problem, coeff), kkt=kkt
    )
    return coeff, report


class ApgConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_iter: PositiveInt = 20000
    kkt_tol: PositiveFloat = 1e-6
    robj_tol: NonNegativeFloat = 0.0
    check_every: PositiveInt = 1
    max_time: PositiveFloat | None = None
    restart: bool = True


def _apg_kkt(problem: ProblemSpec, coeff: CoefficientPair) -> KktResiduals:
    data = problem.data
    fitted = data.x_apply(coeff.b_mat) + data.z_design @ coeff.gamma_vec
    return kkt_residuals(problem, coeff, fitted, fitted - data.response)


def solve_apg(
    problem: ProblemSpec,
    config: ApgConfig | None = None,
    *,
    obj_star: float | None = None,
    store: TraceStore | None = None,
    label: str | None = None,
) -> tuple[CoefficientPair, SolverReport]:
    """Accelerated proximal gradient with fixed step ``1/L`` and monotone restart.

    A candidate that increases the objective is rejected and the momentum
    is reset, so the recorded objective never increases.
    """
    config = config or ApgConfig()
    recorder = TraceRecorder("apg", store=store, obj_star=obj_star, label=label)
    data = problem.data
    phi, psi = problem.phi, problem.psi
    # power iteration approaches the norm from below
    lipschitz = 1.01 * design_lipschitz(data)
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0

    x = CoefficientPair.zeros(data)
    y_b, y_g = x.b_mat, x.gamma_vec
    t = 1.0
    obj = objective(problem, x)
    status = SolverStatus.MAX_ITER
    kkt: KktResiduals | None = None
    eta: float | None = None
    restarts = 0
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        residual = data.x_apply(y_b) + data.z_design @ y_g - data.response
        b_eval = phi.prox(y_b - step * data.xt_apply(residual), step)
        g_eval = psi.prox(y_g - step * (data.z_design.T @ residual), step)
        fitted = data.x_apply(b_eval.value) + data.z_design @ g_eval.value
        candidate = (
            problem.loss.value(fitted) + phi.value_at(b_eval) + psi.value_at(g_eval)
        )

        if config.restart and candidate > obj:
            restarts += 1
            t = 1.0
            y_b, y_g = x.b_mat, x.gamma_vec
        else:
            t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
            momentum = (t - 1.0) / t_next
            y_b = b_eval.value + momentum * (b_eval.value - x.b_mat)
            y_g = g_eval.value + momentum * (g_eval.value - x.gamma_vec)
            x = CoefficientPair(b_eval.value, g_eval.value)
            obj, t = candidate, t_next

        eta = None
        if iteration % config.check_every == 0 or iteration == config.max_iter:
            kkt = _apg_kkt(problem, x)
            eta = kkt.eta
        record = recorder.record(iteration, obj, eta)
        if eta is not None and eta < config.kkt_tol:
            status = SolverStatus.CONVERGED
            break
        if recorder.target_reached(record, config.robj_tol):
            status = SolverStatus.TARGET_REACHED
            break
        if recorder.expired(config.max_time):
            status = SolverStatus.TIMEOUT
            break

    if kkt is None or eta is None:
        kkt = _apg_kkt(problem, x)
    logger.debug("apg restarts", restarts=restarts)
    report = recorder.finish(status, iterations=iteration, objective=obj, kkt=kkt)
    return x, report
