"""Semismooth Newton ascent on the subproblem dual."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveInt
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg
from structlog.stdlib import get_logger

from .errors import SolverError
from .model import DesignData, design_lipschitz, vec_map
from .prox import (
    FusedCertificate,
    GroupCertificate,
    L1Certificate,
    SvdCertificate,
    jacobian_basis,
    nuclear_design_factor,
    nuclear_jacobian_apply,
    nuclear_jacobian_apply_batch,
)
from .subproblem import (
    DualEvaluation,
    OuterState,
    check_stop_subproblem,
    evaluate_dual,
    inner_tolerance,
)
from .types import FloatArray

logger = get_logger(__name__)

EPS = float(np.finfo(np.float64).eps)


class SsnConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: float = Field(1e-4, gt=0.0, lt=0.5)
    tau: float = Field(0.5, gt=0.0, le=1.0)
    eta: float = Field(0.005, gt=0.0, lt=1.0)
    delta: float = Field(0.5, gt=0.0, lt=1.0)
    max_inner: PositiveInt = 50
    cg_max: PositiveInt = 500
    direct_threshold: NonNegativeInt = 800
    max_backtracks: PositiveInt = 50
    grad_floor: float = Field(1e-12, ge=0.0)


@dataclass(frozen=True, eq=False)
class HessianOperator:
    """One element of the generalized Hessian of the dual at an evaluation point.

    ``apply`` is ``-sigma X vec(W(mat(X^T u))) - sigma Z S S^T Z^T u - sigma/(nu+sigma) u``
    where ``W`` is the matrix-penalty Jacobian and ``S S^T`` the vector-penalty one.
    Only the active columns of ``Z`` survive in ``z_active``.
    """

    data: DesignData
    sigma: float
    nu: float
    matrix_cert: SvdCertificate | L1Certificate
    vector_cert: L1Certificate | FusedCertificate | GroupCertificate
    z_active: FloatArray

    @classmethod
    def from_evaluation(cls, state: OuterState, evaluation: DualEvaluation) -> HessianOperator:
        matrix_cert = evaluation.b_eval.certificate
        vector_cert = evaluation.gamma_eval.certificate
        if not isinstance(matrix_cert, SvdCertificate | L1Certificate):
            raise SolverError("matrix prox evaluation carries no usable certificate")
        if not isinstance(vector_cert, L1Certificate | FusedCertificate | GroupCertificate):
            raise SolverError("vector prox evaluation carries no usable certificate")
        data = state.problem.data
        basis = jacobian_basis(vector_cert)
        z_active = np.asarray((basis.T @ data.z_design.T).T)
        return cls(data, state.sigma, state.nu, matrix_cert, vector_cert, z_active)

    @property
    def loss_weight(self) -> float:
        return self.sigma / (self.nu + self.sigma)

    @property
    def active_columns(self) -> int:
        return int(self.z_active.shape[1])

    @property
    def n(self) -> int:
        return self.data.n

    @cached_property
    def _l1_columns(self) -> FloatArray:
        assert isinstance(self.matrix_cert, L1Certificate)
        return self.data.x_design[:, vec_map(self.matrix_cert.active_mask.astype(float)) > 0]

    def _matrix_part(self, u: FloatArray) -> FloatArray:
        cert = self.matrix_cert
        if isinstance(cert, SvdCertificate):
            h_mat = self.data.xt_apply(u)
            return self.data.x_apply(nuclear_jacobian_apply(cert, h_mat))
        cols = self._l1_columns
        return cols @ (cols.T @ u)

    def apply(self, u: FloatArray) -> FloatArray:
        u = np.asarray(u, dtype=np.float64)
        z_part = self.z_active @ (self.z_active.T @ u)
        return -self.sigma * (self._matrix_part(u) + z_part) - self.loss_weight * u

    def _matrix_gram(self) -> FloatArray:
        cert = self.matrix_cert
        if isinstance(cert, L1Certificate):
            return self._l1_columns @ self._l1_columns.T
        x_tensor = self.data.x_tensor
        factor = nuclear_design_factor(cert, x_tensor)
        if factor is not None:
            return factor @ factor.T
        # low-rank factor is not worth it; apply W to every observation
        weighted = nuclear_jacobian_apply_batch(cert, x_tensor)
        gram = self.data.x_design @ weighted.transpose(0, 2, 1).reshape(self.n, -1).T
        return (gram + gram.T) / 2.0

    def to_dense(self) -> FloatArray:
        gram = self._matrix_gram() + self.z_active @ self.z_active.T
        return -(self.sigma * gram + self.loss_weight * np.eye(self.n))


def hessian_apply(op: HessianOperator, u: FloatArray) -> FloatArray:
    return op.apply(u)


@dataclass(frozen=True, eq=False)
class NewtonStep:
    direction: FloatArray
    residual: float
    residual_cap: float
    iterations: int
    method: Literal["direct", "cg"]
    converged: bool


def newton_direction(op: HessianOperator, grad: FloatArray, config: SsnConfig) -> NewtonStep:
    """Solve ``(-H) d = grad`` directly for small ``n``, otherwise by matrix-free CG."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise SolverError("non-finite gradient passed to the Newton solve")
    gnorm = float(np.linalg.norm(grad))
    cap = min(config.eta, gnorm ** (1.0 + config.tau))
    n = grad.size

    if n <= config.direct_threshold:
        neg_hessian = -op.to_dense()
        try:
            factor = linalg.cho_factor(neg_hessian, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise SolverError("Newton system is not positive definite", grad_norm=gnorm) from exc
        direction = linalg.cho_solve(factor, grad, check_finite=False)
        residual = float(np.linalg.norm(neg_hessian @ direction - grad))
        return NewtonStep(direction, residual, cap, 0, "direct", True)

    iterations = 0

    def count(_: FloatArray) -> None:
        nonlocal iterations
        iterations += 1

    operator = LinearOperator((n, n), matvec=lambda v: -op.apply(v), dtype=np.float64)
    atol = max(cap, 10.0 * EPS * gnorm)
    direction, info = cg(
        operator, grad, rtol=0.0, atol=atol, maxiter=config.cg_max, callback=count
    )
    residual = float(np.linalg.norm(op.apply(direction) + grad))
    if info > 0:
        logger.warning(
            "cg iteration cap reached", iterations=iterations, residual=residual, cap=cap
        )
    return NewtonStep(direction, residual, cap, iterations, "cg", info == 0)


def armijo_ascent(
    state: OuterState, evaluation: DualEvaluation, d: FloatArray, config: SsnConfig
) -> tuple[float, DualEvaluation]:
    """Backtrack from the unit step until ``Phi(xi + a d) >= Phi(xi) + mu a <grad, d>``."""
    slope = float(evaluation.gradient @ d)
    if not slope > 0.0:
        raise SolverError("search direction is not an ascent direction", slope=slope)
    slack = 10.0 * EPS * (1.0 + abs(evaluation.value))
    step = 1.0
    for _ in range(config.max_backtracks + 1):
        trial = evaluate_dual(state, evaluation.xi + step * d)
        if trial.value >= evaluation.value + config.mu * step * slope - slack:
            return step, trial
        step *= config.delta
    raise SolverError(
        "line search failed",
        backtracks=config.max_backtracks,
        grad_norm=evaluation.grad_norm,
    )


def gradient_step(
    state: OuterState, evaluation: DualEvaluation, lipschitz: float | None = None
) -> DualEvaluation:
    """Plain ascent step with the reciprocal Lipschitz bound of the dual gradient."""
    if lipschitz is None:
        lipschitz = design_lipschitz(state.problem.data)
    sigma, nu = state.sigma, state.nu
    step = 1.0 / (sigma * lipschitz + sigma / (nu + sigma))
    trial = evaluate_dual(state, evaluation.xi + step * evaluation.gradient)
    if not trial.value >= evaluation.value - 10.0 * EPS * (1.0 + abs(evaluation.value)):
        raise SolverError("gradient fallback step failed to ascend", grad_norm=evaluation.grad_norm)
    return trial


@dataclass(frozen=True)
class SsnIteration:
    iteration: int
    grad_norm: float
    step: float | None = None
    cg_iterations: int = 0
    method: str | None = None
    newton_residual: float | None = None


SsnStatus = Literal["gap", "floor", "max_inner"]


@dataclass(eq=False)
class SsnResult:
    xi: FloatArray
    evaluation: DualEvaluation
    status: SsnStatus
    trace: list[SsnIteration] = field(default_factory=list)

    @property
    def newton_steps(self) -> int:
        return sum(1 for it in self.trace if it.step is not None)


def solve_ssn(
    state: OuterState,
    config: SsnConfig | None = None,
    eps: float = 0.1,
    *,
    lipschitz: float | None = None,
) -> SsnResult:
    """Maximize the subproblem dual from ``state.xi_vec``.

    Stops once the gradient norm reaches the trigger and the duality gap test
    with tolerance ``eps`` passes, at the roundoff floor, or at ``max_inner``.
    """
    config = config or SsnConfig()
    y_norm = float(np.linalg.norm(state.problem.data.response))
    trigger = inner_tolerance(eps, state.sigma)
    floor = config.grad_floor * (1.0 + y_norm)

    evaluation = evaluate_dual(state, state.xi_vec)
    trace: list[SsnIteration] = []
    status: SsnStatus = "max_inner"
    for j in range(config.max_inner + 1):
        gnorm = evaluation.grad_norm
        if not math.isfinite(gnorm):
            raise SolverError("non-finite dual gradient", iteration=j, sigma=state.sigma)
        if gnorm <= floor:
            status = "floor"
            break
        if gnorm <= trigger and check_stop_subproblem(state, evaluation, eps):
            status = "gap"
            break
        if j == config.max_inner:
            break

        op = HessianOperator.from_evaluation(state, evaluation)
        newton = newton_direction(op, evaluation.gradient, config)
        step: float
        try:
            step, evaluation = armijo_ascent(state, evaluation, newton.direction, config)
        except SolverError as exc:
            logger.warning(
                "line search failed, taking a gradient step", iteration=j, **exc.diagnostics
            )
            evaluation = gradient_step(state, evaluation, lipschitz)
            step = math.nan
        trace.append(SsnIteration(j, gnorm, step, newton.iterations, newton.method, newton.residual))

    trace.append(SsnIteration(len(trace), evaluation.grad_norm))
    if status == "max_inner":
        logger.warning("inner iteration cap reached", grad_norm=evaluation.grad_norm, eps=eps)
    logger.debug(
        "ssn finished",
        status=status,
        newton_steps=len(trace) - 1,
        grad_norm=evaluation.grad_norm,
        sigma=state.sigma,
    )
    return SsnResult(evaluation.xi, evaluation, status, trace)
