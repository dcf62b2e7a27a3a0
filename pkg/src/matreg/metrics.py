"""Estimation and prediction error metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, NonFiniteError
from .model import CoefficientPair, DesignData, predict
from .types import FloatArray


@dataclass(frozen=True)
class EvalReport:
    rmse_y: float
    error_b: float
    error_gamma: float
    rank_hat: int
    nonsparsity_gamma: float

    def as_row(self) -> dict[str, float | int]:
        return asdict(self)


def rmse_y(test_data: DesignData, coeff: CoefficientPair) -> float:
    """``||y - y_hat|| / sqrt(n)`` on held-out data."""
    residual = test_data.response - predict(test_data, coeff)
    return float(np.linalg.norm(residual)) / math.sqrt(test_data.n)


def _scaled_distance(truth: FloatArray, estimate: FloatArray, what: str) -> float:
    truth, estimate = np.asarray(truth, dtype=np.float64), np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape:
        raise DimensionError(f"{what}: shapes {truth.shape} and {estimate.shape} differ")
    if truth.size == 0:
        return 0.0
    return float(np.linalg.norm(truth - estimate)) / math.sqrt(truth.size)


def error_b(b_true: FloatArray, b_hat: FloatArray) -> float:
    return _scaled_distance(b_true, b_hat, "Error-B")


def error_gamma(gamma_true: FloatArray, gamma_hat: FloatArray) -> float:
    return _scaled_distance(gamma_true, gamma_hat, "Error-gamma")


def rank_estimate(b_mat: FloatArray, tol_rel: float = 1e-8) -> int:
    """Number of singular values above ``tol_rel * max(sigma_1, 1)``."""
    b_mat = np.asarray(b_mat, dtype=np.float64)
    if not np.all(np.isfinite(b_mat)):
        raise NonFiniteError("rank estimate of a non-finite matrix")
    if b_mat.size == 0:
        return 0
    sv = linalg.svdvals(b_mat)
    return int(np.count_nonzero(sv > tol_rel * max(float(sv[0]), 1.0)))


def nonsparsity(gamma: FloatArray, tol_abs: float = 1e-8) -> float:
    gamma = np.asarray(gamma, dtype=np.float64)
    if not np.all(np.isfinite(gamma)):
        raise NonFiniteError("non-sparsity of a non-finite vector")
    if gamma.size == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(gamma) > tol_abs)) / gamma.size


def rel_obj(obj: float, obj_star: float) -> float:
    """Relative objective gap ``(obj - obj*) / (1 + |obj*|)``."""
    if not math.isfinite(obj_star):
        raise NonFiniteError(f"benchmark objective must be finite, got {obj_star}")
    return (obj - obj_star) / (1.0 + abs(obj_star))


def evaluate(
    test_data: DesignData,
    truth: CoefficientPair,
    estimate: CoefficientPair,
    *,
    rank_tol: float = 1e-8,
    sparsity_tol: float = 1e-8,
) -> EvalReport:
    return EvalReport(
        rmse_y=rmse_y(test_data, estimate),
        error_b=error_b(truth.b_mat, estimate.b_mat),
        error_gamma=error_gamma(truth.gamma_vec, estimate.gamma_vec),
        rank_hat=rank_estimate(estimate.b_mat, rank_tol),
        nonsparsity_gamma=nonsparsity(estimate.gamma_vec, sparsity_tol),
    )
