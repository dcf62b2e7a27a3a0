"""Shared fixtures: small reproducible regression instances."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np
import pytest

from matreg.datagen import gen_lowrank_matrix, gen_samples, gen_sparse_gamma
from matreg.experiments import Estimator, build_penalty, tuning_values
from matreg.model import DesignData, ProblemSpec, contiguous_groups


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def make_data(
    seed: int, n: int = 50, m: int = 10, q: int = 8, p: int = 20, noise_sd: float = 1.0
) -> DesignData:
    rng = np.random.default_rng(seed)
    b_true = gen_lowrank_matrix(m, q, 2, 0.3, rng)
    gamma_true = gen_sparse_gamma(p, 0.25, rng)
    return gen_samples(b_true, gamma_true, n, rng, noise_sd)


@pytest.fixture
def small_data() -> DesignData:
    """n=50 samples of 10x8 matrices with 20 vector covariates."""
    return make_data(7)


ProblemFactory = Callable[..., ProblemSpec]


@pytest.fixture
def make_problem(small_data: DesignData) -> ProblemFactory:
    """Build a problem for an estimator at fractions of the zero-solution levels."""

    def factory(
        estimator: Estimator = Estimator.NL,
        alpha1: float = 0.3,
        alpha2: float = 0.3,
        data: DesignData | None = None,
    ) -> ProblemSpec:
        data = data or small_data
        levels = tuning_values(data, estimator, alpha1, alpha2)
        groups = contiguous_groups(data.p, 4)
        return ProblemSpec(data, build_penalty(estimator, levels, groups))

    return factory


@pytest.fixture
def data_factory() -> Callable[..., DesignData]:
    """Generate instances of other sizes from a seed."""
    return make_data
