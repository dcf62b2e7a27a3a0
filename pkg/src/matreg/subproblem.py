"""The dual of one preconditioned proximal point subproblem.

For the outer iterate ``(B^k, gamma^k, s^k)`` and step ``sigma`` the
subproblem minimizes

    G_k(B, gamma) = h(s) + phi(B) + psi(gamma)
                    + (||B - B^k||^2 + ||gamma - gamma^k||^2 + nu ||s - s^k||^2) / (2 sigma)

with ``s = X vec(B) + Z gamma``. Its Lagrangian dual ``Phi_k`` is smooth and
concave, and its gradient is the constraint residual at the three prox points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CoefficientPair, ProblemSpec
from .prox import ProxEvaluation, moreau_envelope, prox_squared_loss_scaled
from .types import FloatArray


@dataclass(frozen=True, eq=False)
class OuterState:
    problem: ProblemSpec
    b_mat: FloatArray
    gamma_vec: FloatArray
    s_vec: FloatArray
    xi_vec: FloatArray
    sigma: float
    nu: float = 1.0
    iteration: int = 0

    @classmethod
    def initial(
        cls,
        problem: ProblemSpec,
        sigma: float,
        nu: float = 1.0,
        warm_start: CoefficientPair | None = None,
    ) -> OuterState:
        """Start from ``warm_start`` (zeros by default) with the matching dual guess."""
        data = problem.data
        coeff = warm_start or CoefficientPair.zeros(data)
        coeff.check(data)
        fitted = data.x_apply(coeff.b_mat) + data.z_design @ coeff.gamma_vec
        return cls(
            problem=problem,
            b_mat=np.array(coeff.b_mat),
            gamma_vec=np.array(coeff.gamma_vec),
            s_vec=fitted,
            xi_vec=fitted - data.response,
            sigma=sigma,
            nu=nu,
        )

    @property
    def coefficients(self) -> CoefficientPair:
        return CoefficientPair(self.b_mat, self.gamma_vec)


@dataclass(frozen=True, eq=False)
class DualEvaluation:
    """``Phi_k`` and its gradient at ``xi``, with the prox evaluations behind them."""

    xi: FloatArray
    value: float
    gradient: FloatArray
    b_eval: ProxEvaluation
    gamma_eval: ProxEvaluation
    s_value: FloatArray
    fitted: FloatArray

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.gradient))


def evaluate_dual(state: OuterState, xi: FloatArray) -> DualEvaluation:
    problem = state.problem
    data = problem.data
    sigma, nu = state.sigma, state.nu
    xi = np.asarray(xi, dtype=np.float64)

    b_eval = problem.phi.prox(state.b_mat - sigma * data.xt_apply(xi), sigma)
    gamma_eval = problem.psi.prox(state.gamma_vec - sigma * (data.z_design.T @ xi), sigma)
    s_value = prox_squared_loss_scaled(state.s_vec + (sigma / nu) * xi, data.response, sigma / nu)

    fitted = data.x_apply(b_eval.value) + data.z_design @ gamma_eval.value
    gradient = fitted - s_value

    # Lagrangian at its minimizers; equal to the envelope form without the
    # cancellation between large squared norms
    proximity = (
        np.sum((b_eval.value - state.b_mat) ** 2)
        + np.sum((gamma_eval.value - state.gamma_vec) ** 2)
        + nu * np.sum((s_value - state.s_vec) ** 2)
    )
    value = (
        problem.loss.value(s_value)
        + problem.phi.value_at(b_eval)
        + problem.psi.value(gamma_eval.value)
        + float(xi @ gradient)
        + float(proximity) / (2.0 * sigma)
    )
    return DualEvaluation(xi, value, gradient, b_eval, gamma_eval, s_value, fitted)


def eval_dual_objective(state: OuterState, xi: FloatArray) -> float:
    return evaluate_dual(state, xi).value


def eval_dual_gradient(state: OuterState, xi: FloatArray) -> DualEvaluation:
    """Gradient of ``Phi_k`` at ``xi``; the returned evaluation keeps the prox
    certificates for the Newton step and the primal update."""
    return evaluate_dual(state, xi)


def dual_objective_envelope_form(state: OuterState, xi: FloatArray) -> float:
    """``Phi_k`` assembled literally from three Moreau envelopes."""
    problem = state.problem
    data = problem.data
    sigma, nu = state.sigma, state.nu
    b_arg = state.b_mat - sigma * data.xt_apply(xi)
    g_arg = state.gamma_vec - sigma * (data.z_design.T @ xi)
    s_arg = state.s_vec + (sigma / nu) * xi

    envelopes = (
        moreau_envelope(problem.phi, b_arg, sigma)
        + moreau_envelope(problem.psi, g_arg, sigma)
        + nu * moreau_envelope(problem.loss, s_arg, sigma / nu)
    )
    shifted = np.sum(b_arg**2) + np.sum(g_arg**2) + nu * np.sum(s_arg**2)
    anchor = np.sum(state.b_mat**2) + np.sum(state.gamma_vec**2) + nu * np.sum(state.s_vec**2)
    return float(envelopes - 0.5 * shifted + 0.5 * anchor) / sigma


def subproblem_objective(state: OuterState, coeff: CoefficientPair) -> float:
    """``G_k`` at ``coeff``, with ``s`` tied to the fitted values."""
    problem = state.problem
    data = problem.data
    fitted = data.x_apply(coeff.b_mat) + data.z_design @ coeff.gamma_vec
    proximity = (
        np.sum((coeff.b_mat - state.b_mat) ** 2)
        + np.sum((coeff.gamma_vec - state.gamma_vec) ** 2)
        + state.nu * np.sum((fitted - state.s_vec) ** 2)
    )
    return (
        problem.loss.value(fitted)
        + problem.phi.value(coeff.b_mat)
        + problem.psi.value(coeff.gamma_vec)
        + float(proximity) / (2.0 * state.sigma)
    )


def subproblem_gap(state: OuterState, evaluation: DualEvaluation) -> float:
    """``G_k`` at the prox points minus ``Phi_k``, free of large cancellations.

    Only the loss and the ``s`` proximity term differ between the two, so
    the gap is an inner product with the gradient ``fitted - s``.
    """
    fitted, s_value = evaluation.fitted, evaluation.s_value
    y = state.problem.data.response
    weight = state.nu / (2.0 * state.sigma)
    direction = (
        0.5 * (fitted + s_value) - y - evaluation.xi + weight * (fitted + s_value - 2.0 * state.s_vec)
    )
    return float(direction @ (fitted - s_value))


def check_stop_subproblem(
    state: OuterState,
    evaluation: DualEvaluation,
    eps: float,
    candidate: CoefficientPair | None = None,
) -> bool:
    """Duality-gap test ``G_k(candidate) - Phi_k(xi) <= eps^2 / (2 sigma)``.

    The candidate defaults to the prox points that the primal update would
    produce from ``evaluation``.
    """
    if candidate is None:
        gap = subproblem_gap(state, evaluation)
    else:
        gap = subproblem_objective(state, candidate) - evaluation.value
    return gap <= eps**2 / (2.0 * state.sigma)


def inner_tolerance(eps: float, sigma: float) -> float:
    """Gradient-norm level at which the gap test is worth evaluating."""
    return min(0.1, eps) / max(1.0, float(np.sqrt(sigma)))
