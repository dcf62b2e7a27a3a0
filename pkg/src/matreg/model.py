"""Problem data, penalties and the primal objective."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, model_validator
from scipy import linalg

from . import prox
from .errors import DimensionError, NonFiniteError
from .prox import ProxEvaluation
from .types import FloatArray


def _as_readonly(a: object, ndim: int, what: str) -> FloatArray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DesignData:
    """Observations: row ``i`` of ``x_design`` is ``vec(X_i)`` (column-major)."""

    x_design: FloatArray
    z_design: FloatArray
    response: FloatArray
    mat_rows: int
    mat_cols: int

    def __post_init__(self) -> None:
        x = _as_readonly(self.x_design, 2, "x_design")
        z = _as_readonly(self.z_design, 2, "z_design")
        y = _as_readonly(self.response, 1, "response")
        if self.mat_rows < 1 or self.mat_cols < 1:
            raise DimensionError("matrix dimensions must be positive")
        if x.shape[1] != self.mat_rows * self.mat_cols:
            raise DimensionError(
                f"x_design has {x.shape[1]} columns, expected {self.mat_rows}*{self.mat_cols}"
            )
        if not (x.shape[0] == z.shape[0] == y.shape[0]) or y.shape[0] < 1:
            raise DimensionError(
                f"row counts differ: x={x.shape[0]}, z={z.shape[0]}, y={y.shape[0]}"
            )
        object.__setattr__(self, "x_design", x)
        object.__setattr__(self, "z_design", z)
        object.__setattr__(self, "response", y)

    @property
    def n(self) -> int:
        return int(self.response.shape[0])

    @property
    def p(self) -> int:
        return int(self.z_design.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.mat_rows, self.mat_cols

    @property
    def x_tensor(self) -> FloatArray:
        """The samples as an ``(n, m, q)`` stack of matrices."""
        return self.x_design.reshape(self.n, self.mat_cols, self.mat_rows).transpose(0, 2, 1)

    def xt_apply(self, u: FloatArray) -> FloatArray:
        """``mat(X^T u)``."""
        return mat_map(self.x_design.T @ u, self.mat_rows, self.mat_cols)

    def x_apply(self, b_mat: FloatArray) -> FloatArray:
        """``X vec(B)``."""
        return self.x_design @ vec_map(b_mat)


@dataclass(frozen=True, eq=False)
class CoefficientPair:
    b_mat: FloatArray
    gamma_vec: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "b_mat", _as_readonly(self.b_mat, 2, "b_mat"))
        object.__setattr__(self, "gamma_vec", _as_readonly(self.gamma_vec, 1, "gamma_vec"))

    @classmethod
    def zeros(cls, data: DesignData) -> CoefficientPair:
        return cls(np.zeros(data.shape), np.zeros(data.p))

    def check(self, data: DesignData) -> None:
        if self.b_mat.shape != data.shape or self.gamma_vec.shape != (data.p,):
            raise DimensionError(
                f"coefficients {self.b_mat.shape}/{self.gamma_vec.shape} do not match "
                f"data {data.shape}/({data.p},)"
            )


# --- penalties -----------------------------------------------------------


class _Penalty(BaseModel):
    model_config = ConfigDict(frozen=True)

    def value(self, x: FloatArray) -> float:
        raise NotImplementedError

    def prox(self, x: FloatArray, t: float) -> ProxEvaluation:
        raise NotImplementedError

    def jacobian_apply(self, evaluation: ProxEvaluation, u: FloatArray) -> FloatArray:
        if evaluation.certificate is None:
            raise ValueError("evaluation carries no certificate")
        return prox.jacobian_apply(evaluation.certificate, u)

    def value_at(self, evaluation: ProxEvaluation) -> float:
        """Penalty value at the prox output held by ``evaluation``."""
        return self.value(evaluation.value)


class NuclearNorm(_Penalty):
    kind: Literal["nuclear"] = "nuclear"
    rho: NonNegativeFloat = 0.0

    def value(self, x: FloatArray) -> float:
        return self.rho * float(np.sum(linalg.svdvals(x)))

    def prox(self, x: FloatArray, t: float) -> ProxEvaluation:
        return prox.prox_nuclear(x, t * self.rho)

    def value_at(self, evaluation: ProxEvaluation) -> float:
        cert = evaluation.certificate
        if not isinstance(cert, prox.SvdCertificate):
            return self.value(evaluation.value)
        # singular values of the prox output are the shrunk input values
        return self.rho * float(np.sum(np.maximum(cert.singular_values - cert.threshold, 0.0)))


class ElementwiseL1(_Penalty):
    kind: Literal["l1"] = "l1"
    rho: NonNegativeFloat = 0.0

    def value(self, x: FloatArray) -> float:
        return self.rho * float(np.sum(np.abs(x)))

    def prox(self, x: FloatArray, t: float) -> ProxEvaluation:
        return prox.prox_l1(x, t * self.rho)


class Lasso(_Penalty):
    kind: Literal["lasso"] = "lasso"
    lam: NonNegativeFloat = 0.0

    def value(self, x: FloatArray) -> float:
        return self.lam * float(np.sum(np.abs(x)))

    def prox(self, x: FloatArray, t: float) -> ProxEvaluation:
        return prox.prox_l1(x, t * self.lam)


class FusedLasso(_Penalty):
    kind: Literal["fused"] = "fused"
    lam: NonNegativeFloat = 0.0
    lam_prime: NonNegativeFloat = 0.0

    def value(self, x: FloatArray) -> float:
        return self.lam * float(np.sum(np.abs(x))) + self.lam_prime * float(
            np.sum(np.abs(np.diff(x)))
        )

    def prox(self, x: FloatArray, t: float) -> ProxEvaluation:
        return prox.prox_fused(x, t * self.lam, t * self.lam_prime)


class SparseGroupLasso(_Penalty):
    """``lam * ||x||_1 + lam_prime * sum_l w_l ||x_{G_l}||``.

    Groups are 0-based index lists. Weights default to the square root of
    each group's size.
    """

    kind: Literal["sgl"] = "sgl"
    lam: NonNegativeFloat = 0.0
    lam_prime: NonNegativeFloat = 0.0
    groups: tuple[tuple[int, ...], ...]
    weights: tuple[PositiveFloat, ...] | None = None

    @model_validator(mode="before")
    @classmethod
    def _default_weights(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("weights") is None and "groups" in data:
            data = {**data, "weights": tuple(float(np.sqrt(len(g))) for g in data["groups"])}
        return data

    @model_validator(mode="after")
    def _check_groups(self) -> SparseGroupLasso:
        prox.check_partition(self.groups, self.size)
        if self.weights is None or len(self.weights) != len(self.groups):
            raise ValueError("need exactly one weight per group")
        return self

    @property
    def size(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def group_weights(self) -> tuple[float, ...]:
        assert self.weights is not None
        return self.weights

    def value(self, x: FloatArray) -> float:
        group_term = sum(
            w * float(np.linalg.norm(x[list(g)])) for g, w in zip(self.groups, self.group_weights)
        )
        return self.lam * float(np.sum(np.abs(x))) + self.lam_prime * group_term

    def prox(self, x: FloatArray, t: float) -> ProxEvaluation:
        return prox.prox_sgl(x, t * self.lam, t * self.lam_prime, self.groups, self.group_weights)


MatrixPenalty = Annotated[NuclearNorm | ElementwiseL1, Field(discriminator="kind")]
VectorPenalty = Annotated[Lasso | FusedLasso | SparseGroupLasso, Field(discriminator="kind")]


class PenaltySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    matrix_penalty: MatrixPenalty = Field(default_factory=NuclearNorm)
    vector_penalty: VectorPenalty = Field(default_factory=Lasso)


@dataclass(frozen=True, eq=False)
class SquaredLoss:
    """``h(s) = 0.5 * ||s - y||^2``."""

    response: FloatArray

    def value(self, x: FloatArray) -> float:
        return 0.5 * float(np.sum((x - self.response) ** 2))

    def prox(self, x: FloatArray, t: float) -> ProxEvaluation:
        return ProxEvaluation(prox.prox_squared_loss_scaled(x, self.response, t))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    data: DesignData
    penalty: PenaltySpec = field(default_factory=PenaltySpec)

    def __post_init__(self) -> None:
        vp = self.penalty.vector_penalty
        if isinstance(vp, SparseGroupLasso) and vp.size != self.data.p:
            raise DimensionError(f"groups cover {vp.size} coordinates, data has p={self.data.p}")

    @property
    def loss(self) -> SquaredLoss:
        return SquaredLoss(self.data.response)

    @property
    def phi(self) -> NuclearNorm | ElementwiseL1:
        return self.penalty.matrix_penalty

    @property
    def psi(self) -> Lasso | FusedLasso | SparseGroupLasso:
        return self.penalty.vector_penalty


# --- operations ------------------------------------------------------------


def vec_map(mat: FloatArray) -> FloatArray:
    """Stack the columns of ``mat``."""
    return np.asarray(mat, dtype=np.float64).reshape(-1, order="F")


def mat_map(v: FloatArray, m: int, q: int) -> FloatArray:
    """Inverse (and adjoint) of :func:`vec_map`."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != m * q:
        raise DimensionError(f"cannot reshape vector of length {v.size} to {m}x{q}")
    return v.reshape((m, q), order="F")


def predict(data: DesignData, coeff: CoefficientPair) -> FloatArray:
    coeff.check(data)
    return data.x_apply(coeff.b_mat) + data.z_design @ coeff.gamma_vec


def objective(problem: ProblemSpec, coeff: CoefficientPair) -> float:
    """``h(X vec(B) + Z gamma) + phi(B) + psi(gamma)``."""
    fitted = predict(problem.data, coeff)
    return (
        problem.loss.value(fitted)
        + problem.phi.value(coeff.b_mat)
        + problem.psi.value(coeff.gamma_vec)
    )


@dataclass(frozen=True, eq=False)
class Standardization:
    """Column transforms applied by :func:`standardize_columns`."""

    x_mean: FloatArray
    x_scale: FloatArray
    z_mean: FloatArray
    z_scale: FloatArray
    y_mean: float = 0.0
    y_scale: float = 1.0

    def restore_response(self, y: FloatArray) -> FloatArray:
        return y * self.y_scale + self.y_mean


def _center_scale(a: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    mean = a.mean(axis=0)
    sd = a.std(axis=0, ddof=1)
    scale = np.where(sd > 1e-12 * np.maximum(1.0, np.abs(mean)), sd, 1.0)
    return (a - mean) / scale, mean, scale


def standardize_columns(
    data: DesignData, also_response: bool = False
) -> tuple[DesignData, Standardization]:
    """Center every column and scale it to unit sample standard deviation.

    Constant columns are centered and keep scale 1.
    """
    if data.n < 2:
        raise DimensionError("standardization needs at least two samples")
    x, x_mean, x_scale = _center_scale(data.x_design)
    z, z_mean, z_scale = _center_scale(data.z_design)
    y = data.response
    y_mean, y_scale = 0.0, 1.0
    if also_response:
        ys, ym, ysc = _center_scale(y[:, None])
        y, y_mean, y_scale = ys[:, 0], float(ym[0]), float(ysc[0])
    record = Standardization(x_mean, x_scale, z_mean, z_scale, y_mean, y_scale)
    return DesignData(x, z, y, data.mat_rows, data.mat_cols), record


def contiguous_groups(p: int, g: int) -> tuple[tuple[int, ...], ...]:
    """Split ``range(p)`` into ``g`` adjacent groups of near-equal size."""
    if not 1 <= g <= p:
        raise DimensionError(f"cannot split {p} coordinates into {g} groups")
    return tuple(tuple(int(i) for i in chunk) for chunk in np.array_split(np.arange(p), g))


def spectral_norm(mat: FloatArray, rtol: float = 1e-10, max_iter: int = 1000) -> float:
    """Largest singular value by power iteration on ``mat^T mat``."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.size == 0 or not np.any(mat):
        return 0.0
    v = np.random.default_rng(0).standard_normal(mat.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = mat.T @ (mat @ v)
        previous, estimate = estimate, float(np.sqrt(max(float(v @ w), 0.0)))
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(estimate - previous) <= rtol * estimate:
            break
    return estimate


def design_lipschitz(data: DesignData) -> float:
    """``||X X^T + Z Z^T||``, the Lipschitz constant of the smooth loss gradient."""
    return spectral_norm(np.hstack([data.x_design, data.z_design])) ** 2
