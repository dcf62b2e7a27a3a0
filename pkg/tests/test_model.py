"""Tests for problem data, penalties and the primal objective."""

import numpy as np
import pytest
from pydantic import TypeAdapter, ValidationError

from matreg.errors import DimensionError, NonFiniteError
from matreg.model import (
    CoefficientPair,
    DesignData,
    ElementwiseL1,
    FusedLasso,
    Lasso,
    MatrixPenalty,
    NuclearNorm,
    PenaltySpec,
    ProblemSpec,
    SparseGroupLasso,
    VectorPenalty,
    contiguous_groups,
    design_lipschitz,
    mat_map,
    objective,
    predict,
    spectral_norm,
    standardize_columns,
    vec_map,
)


class TestVecMat:
    """Tests for column stacking."""

    def test_column_major_order(self):
        mat = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        assert vec_map(mat).tolist() == [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]

    def test_inverse(self, rng):
        mat = rng.standard_normal((4, 6))
        np.testing.assert_array_equal(mat_map(vec_map(mat), 4, 6), mat)

    def test_adjoint(self, rng):
        mat = rng.standard_normal((3, 5))
        v = rng.standard_normal(15)
        assert np.isclose(vec_map(mat) @ v, np.sum(mat * mat_map(v, 3, 5)))

    def test_wrong_length(self):
        with pytest.raises(DimensionError):
            mat_map(np.zeros(7), 2, 3)


class TestDesignData:
    """Tests for validation and the design operators."""

    def test_tensor_matches_rows(self, small_data):
        x_tensor = small_data.x_tensor
        for i in (0, 17, 49):
            np.testing.assert_array_equal(x_tensor[i], mat_map(small_data.x_design[i], 10, 8))

    def test_xt_apply_is_adjoint_of_x_apply(self, small_data, rng):
        b_mat = rng.standard_normal((10, 8))
        u = rng.standard_normal(50)
        lhs = u @ small_data.x_apply(b_mat)
        rhs = np.sum(small_data.xt_apply(u) * b_mat)
        assert np.isclose(lhs, rhs)

    def test_column_count_checked(self):
        with pytest.raises(DimensionError):
            DesignData(np.zeros((3, 5)), np.zeros((3, 2)), np.zeros(3), 2, 3)

    def test_row_counts_checked(self):
        with pytest.raises(DimensionError):
            DesignData(np.zeros((3, 6)), np.zeros((4, 2)), np.zeros(3), 2, 3)

    def test_non_finite_rejected(self):
        y = np.array([0.0, np.nan, 1.0])
        with pytest.raises(NonFiniteError):
            DesignData(np.zeros((3, 6)), np.zeros((3, 2)), y, 2, 3)

    def test_arrays_are_read_only(self, small_data):
        with pytest.raises(ValueError):
            small_data.response[0] = 1.0


class TestCoefficientPair:
    """Tests for the coefficient container."""

    def test_zeros(self, small_data):
        coeff = CoefficientPair.zeros(small_data)
        assert coeff.b_mat.shape == (10, 8)
        assert coeff.gamma_vec.shape == (20,)

    def test_check_shapes(self, small_data):
        with pytest.raises(DimensionError):
            CoefficientPair(np.zeros((8, 10)), np.zeros(20)).check(small_data)


class TestPenalties:
    """Tests for penalty models and their discriminated unions."""

    def test_nuclear_value(self):
        mat = np.diag([3.0, 1.0])
        assert NuclearNorm(rho=2.0).value(mat) == pytest.approx(8.0)

    def test_nuclear_value_at_uses_certificate(self, rng):
        pen = NuclearNorm(rho=1.5)
        evaluation = pen.prox(rng.standard_normal((5, 7)), 0.4)
        assert pen.value_at(evaluation) == pytest.approx(pen.value(evaluation.value))

    def test_fused_value(self):
        x = np.array([1.0, 1.0, -2.0])
        assert FusedLasso(lam=1.0, lam_prime=0.5).value(x) == pytest.approx(4.0 + 1.5)

    def test_sgl_default_weights(self):
        pen = SparseGroupLasso(lam=1.0, lam_prime=1.0, groups=((0, 1, 2, 3), (4,)))
        assert pen.group_weights == pytest.approx((2.0, 1.0))

    def test_sgl_value(self):
        pen = SparseGroupLasso(lam=1.0, lam_prime=2.0, groups=((0, 1), (2,)), weights=(1.0, 1.0))
        x = np.array([3.0, 4.0, -1.0])
        assert pen.value(x) == pytest.approx(8.0 + 2.0 * (5.0 + 1.0))

    def test_sgl_rejects_overlapping_groups(self):
        with pytest.raises(ValidationError):
            SparseGroupLasso(groups=((0, 1), (1, 2)))

    def test_sgl_rejects_wrong_weight_count(self):
        with pytest.raises(ValidationError):
            SparseGroupLasso(groups=((0,), (1,)), weights=(1.0,))

    def test_negative_level_rejected(self):
        with pytest.raises(ValidationError):
            Lasso(lam=-1.0)

    def test_discriminated_matrix_penalty(self):
        pen = TypeAdapter(MatrixPenalty).validate_python({"kind": "l1", "rho": 0.5})
        assert isinstance(pen, ElementwiseL1)

    def test_discriminated_vector_penalty(self):
        pen = TypeAdapter(VectorPenalty).validate_python(
            {"kind": "sgl", "lam": 1.0, "groups": [[0, 1], [2]]}
        )
        assert isinstance(pen, SparseGroupLasso)
        assert pen.groups == ((0, 1), (2,))

    def test_default_spec(self):
        spec = PenaltySpec()
        assert isinstance(spec.matrix_penalty, NuclearNorm)
        assert isinstance(spec.vector_penalty, Lasso)


class TestProblemSpec:
    """Tests for the assembled problem and its objective."""

    def test_sgl_size_must_match(self, small_data):
        penalty = PenaltySpec(vector_penalty=SparseGroupLasso(groups=((0, 1), (2,))))
        with pytest.raises(DimensionError):
            ProblemSpec(small_data, penalty)

    def test_objective_at_zero(self, small_data):
        problem = ProblemSpec(small_data, PenaltySpec(matrix_penalty=NuclearNorm(rho=3.0)))
        coeff = CoefficientPair.zeros(small_data)
        expected = 0.5 * float(small_data.response @ small_data.response)
        assert objective(problem, coeff) == pytest.approx(expected)

    def test_objective_terms(self, small_data, rng):
        penalty = PenaltySpec(matrix_penalty=NuclearNorm(rho=2.0), vector_penalty=Lasso(lam=0.5))
        problem = ProblemSpec(small_data, penalty)
        coeff = CoefficientPair(rng.standard_normal((10, 8)), rng.standard_normal(20))
        residual = predict(small_data, coeff) - small_data.response
        expected = (
            0.5 * residual @ residual
            + 2.0 * np.linalg.svd(coeff.b_mat, compute_uv=False).sum()
            + 0.5 * np.abs(coeff.gamma_vec).sum()
        )
        assert objective(problem, coeff) == pytest.approx(expected)

    @pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_objective_convex_along_segments(self, small_data, rng, t):
        penalty = PenaltySpec(
            matrix_penalty=NuclearNorm(rho=1.5),
            vector_penalty=FusedLasso(lam=0.4, lam_prime=0.8),
        )
        problem = ProblemSpec(small_data, penalty)
        for _ in range(10):
            c1 = CoefficientPair(rng.standard_normal((10, 8)), rng.standard_normal(20))
            c2 = CoefficientPair(rng.standard_normal((10, 8)), rng.standard_normal(20))
            mid = CoefficientPair(
                t * c1.b_mat + (1 - t) * c2.b_mat, t * c1.gamma_vec + (1 - t) * c2.gamma_vec
            )
            bound = t * objective(problem, c1) + (1 - t) * objective(problem, c2)
            assert objective(problem, mid) <= bound + 1e-9 * (1 + abs(bound))

    def test_predict_is_linear(self, small_data, rng):
        c1 = CoefficientPair(rng.standard_normal((10, 8)), rng.standard_normal(20))
        c2 = CoefficientPair(rng.standard_normal((10, 8)), rng.standard_normal(20))
        a, b = 1.7, -0.6
        combined = CoefficientPair(a * c1.b_mat + b * c2.b_mat, a * c1.gamma_vec + b * c2.gamma_vec)
        expected = a * predict(small_data, c1) + b * predict(small_data, c2)
        np.testing.assert_allclose(predict(small_data, combined), expected, atol=1e-10)


class TestStandardize:
    """Tests for column standardization."""

    def test_unit_scale(self, small_data):
        scaled, record = standardize_columns(small_data, also_response=True)
        np.testing.assert_allclose(scaled.x_design.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(scaled.z_design.std(axis=0, ddof=1), 1.0)
        np.testing.assert_allclose(record.restore_response(scaled.response), small_data.response)

    def test_constant_column_kept(self):
        x = np.column_stack([np.full(4, 3.0), np.arange(4.0)])
        data = DesignData(x, np.ones((4, 1)), np.arange(4.0), 1, 2)
        scaled, record = standardize_columns(data)
        np.testing.assert_array_equal(scaled.x_design[:, 0], 0.0)
        assert record.x_scale[0] == 1.0
        assert record.z_scale[0] == 1.0

    def test_needs_two_samples(self):
        data = DesignData(np.ones((1, 2)), np.ones((1, 1)), np.ones(1), 1, 2)
        with pytest.raises(DimensionError):
            standardize_columns(data)


class TestHelpers:
    """Tests for grouping and norm estimates."""

    def test_contiguous_groups(self):
        groups = contiguous_groups(10, 3)
        assert groups == ((0, 1, 2, 3), (4, 5, 6), (7, 8, 9))

    def test_contiguous_groups_bounds(self):
        with pytest.raises(DimensionError):
            contiguous_groups(3, 4)

    def test_spectral_norm(self, rng):
        mat = rng.standard_normal((12, 7))
        assert spectral_norm(mat) == pytest.approx(np.linalg.norm(mat, 2), rel=1e-6)

    def test_spectral_norm_zero(self):
        assert spectral_norm(np.zeros((3, 3))) == 0.0

    def test_design_lipschitz(self, small_data):
        joint = np.hstack([small_data.x_design, small_data.z_design])
        assert design_lipschitz(small_data) == pytest.approx(np.linalg.norm(joint, 2) ** 2, rel=1e-6)
