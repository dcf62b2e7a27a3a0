"""Synthetic designs and coefficients, and CSV ingestion for real data."""

from __future__ import annotations

from enum import StrEnum
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.random import Generator
from structlog.stdlib import get_logger

from .errors import CsvFormatError, DimensionError
from .model import DesignData, contiguous_groups, vec_map
from .types import FloatArray

logger = get_logger(__name__)


class ShapeKind(StrEnum):
    SQUARE = "square"
    TRIANGLE = "triangle"
    CIRCLE = "circle"
    HEART = "heart"


class GammaScheme(StrEnum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"

    @property
    def n_groups(self) -> int:
        return 20 if self is GammaScheme.S3 else 10

    def partition(self, p: int) -> tuple[tuple[int, ...], ...]:
        return contiguous_groups(p, self.n_groups)


def gen_shape_matrix(kind: ShapeKind | str, m: int, q: int) -> FloatArray:
    """0/1 mask of a centered shape whose bounding box is half the grid.

    Cells are tested at their centers; the heart uses the implicit curve
    ``(x^2 + y^2 - 1)^3 - x^2 y^3 <= 0`` stretched over that box.
    """
    kind = ShapeKind(kind)
    if m < 8 or q < 8:
        raise DimensionError(f"shape grids need m, q >= 8, got {m}x{q}")
    rows = np.arange(m)[:, None] + 0.5
    cols = np.arange(q)[None, :] + 0.5
    match kind:
        case ShapeKind.SQUARE:
            mask = np.zeros((m, q), dtype=bool)
            mask[m // 4 : m // 4 + m // 2, q // 4 : q // 4 + q // 2] = True
        case ShapeKind.CIRCLE:
            radius = min(m, q) / 4.0
            mask = (rows - m / 2.0) ** 2 + (cols - q / 2.0) ** 2 <= radius**2
        case ShapeKind.TRIANGLE:
            top, bottom = m / 4.0, 3.0 * m / 4.0
            half_width = (q / 4.0) * (rows - top) / (bottom - top)
            mask = (rows >= top) & (rows <= bottom) & (np.abs(cols - q / 2.0) <= half_width)
        case ShapeKind.HEART:
            x = 1.2 * (cols - q / 2.0) / (q / 4.0)
            y = 1.2 * (m / 2.0 - rows) / (m / 4.0) + 0.118
            mask = (x**2 + y**2 - 1.0) ** 3 - x**2 * y**3 <= 0.0
    return np.broadcast_to(mask, (m, q)).astype(np.float64)


def bernoulli_level(r: int, s: float) -> float:
    """Success probability that makes ``B1 @ B2.T`` have expected density ``s``."""
    return float(np.sqrt(1.0 - (1.0 - s) ** (1.0 / r)))


def gen_lowrank_matrix(m: int, q: int, r: int, s: float, rng: Generator) -> FloatArray:
    if not 1 <= r <= min(m, q):
        raise ValueError(f"rank must lie in [1, {min(m, q)}], got {r}")
    if not 0.0 < s < 1.0:
        raise ValueError(f"target density must lie in (0, 1), got {s}")
    level = bernoulli_level(r, s)
    b1 = (rng.random((m, r)) < level).astype(np.float64)
    b2 = (rng.random((q, r)) < level).astype(np.float64)
    return b1 @ b2.T


def gen_gamma(scheme: GammaScheme | str, p: int, rng: Generator) -> FloatArray:
    scheme = GammaScheme(scheme)
    if p < 10 * scheme.n_groups:
        raise DimensionError(f"scheme {scheme} needs p >= {10 * scheme.n_groups}, got {p}")
    gamma = np.zeros(p)
    groups = scheme.partition(p)
    match scheme:
        case GammaScheme.S1:
            for group in groups:
                gamma[group[rng.integers(len(group))]] = 5.0
        case GammaScheme.S2:
            for group in groups:
                gamma[list(group[:10])] = 1.0
        case GammaScheme.S3:
            pattern = np.where(np.arange(10) % 2 == 0, 1.0, -1.0)
            for group in groups[:10]:
                gamma[list(group[:10])] = pattern
    return gamma


def gen_sparse_gamma(p: int, nonsparsity: float, rng: Generator) -> FloatArray:
    """Vector of ones on ``round(nonsparsity * p)`` random coordinates."""
    if not 0.0 <= nonsparsity <= 1.0:
        raise ValueError(f"non-sparsity must lie in [0, 1], got {nonsparsity}")
    gamma = np.zeros(p)
    support = rng.choice(p, size=int(round(nonsparsity * p)), replace=False)
    gamma[support] = 1.0
    return gamma


def gen_samples(
    b_mat: FloatArray,
    gamma: FloatArray,
    n: int,
    rng: Generator,
    noise_sd: float = 1.0,
) -> DesignData:
    """Gaussian designs with ``y_i = <X_i, B> + <z_i, gamma> + noise``."""
    if n < 1:
        raise DimensionError(f"need at least one sample, got n={n}")
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be nonnegative, got {noise_sd}")
    b_mat = np.asarray(b_mat, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    m, q = b_mat.shape
    x_design = rng.standard_normal((n, m * q))
    z_design = rng.standard_normal((n, gamma.size))
    response = x_design @ vec_map(b_mat) + z_design @ gamma
    if noise_sd > 0:
        response = response + noise_sd * rng.standard_normal(n)
    return DesignData(x_design, z_design, response, m, q)


def _read_numeric_csv(path: Path) -> FloatArray:
    try:
        raw = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise CsvFormatError(str(path), "file is empty") from exc
    except pd.errors.ParserError as exc:
        raise CsvFormatError(str(path), str(exc)) from exc

    values = raw.apply(pd.to_numeric, errors="coerce")
    first_line = 1
    present = raw.iloc[0].notna()
    if present.any() and values.iloc[0][present].isna().all():
        # a first line with no numeric token is a header
        raw, values = raw.iloc[1:], values.iloc[1:]
        first_line = 2
    if raw.empty:
        raise CsvFormatError(str(path), "no data rows")

    bad = (values.isna() & raw.notna()).to_numpy()
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        token = raw.iat[row, col]
        raise CsvFormatError(
            str(path), f"cannot parse {token!r} as a number", row=first_line + row, column=col + 1
        )
    return values.fillna(0.0).to_numpy(dtype=np.float64)


def load_csv_dataset(
    path_y: str | Path, path_z: str | Path, path_x: str | Path, m: int, q: int
) -> DesignData:
    """Read ``y`` (one column), ``Z`` (n x p) and ``X`` (n x mq, rows are
    column-major ``vec(X_i)``). Empty cells become zero; no scaling is applied."""
    path_y, path_z, path_x = Path(path_y), Path(path_z), Path(path_x)
    y = _read_numeric_csv(path_y)
    z = _read_numeric_csv(path_z)
    x = _read_numeric_csv(path_x)
    if y.shape[1] != 1:
        raise CsvFormatError(str(path_y), f"expected a single column, found {y.shape[1]}")
    if x.shape[1] != m * q:
        raise CsvFormatError(
            str(path_x), f"expected {m}*{q}={m * q} columns, found {x.shape[1]}"
        )
    if not x.shape[0] == z.shape[0] == y.shape[0]:
        raise DimensionError(
            f"row counts differ: {path_y}={y.shape[0]}, {path_z}={z.shape[0]}, "
            f"{path_x}={x.shape[0]}"
        )
    logger.info("loaded csv dataset", n=y.shape[0], p=z.shape[1], m=m, q=q)
    return DesignData(x, z, y[:, 0], m, q)
