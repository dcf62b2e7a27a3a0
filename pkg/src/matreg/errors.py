"""Exception hierarchy shared by the solvers, generators and the CLI."""

from __future__ import annotations

from typing import Any


class MatregError(Exception):
    """Base class for every error raised by matreg."""


class DimensionError(MatregError, ValueError):
    """Array shapes disagree with the problem dimensions."""


class NonFiniteError(MatregError, ValueError):
    """Input data contains NaN or infinite entries."""


class InvalidPartitionError(MatregError, ValueError):
    """Group index sets do not form a disjoint cover of the coordinates."""


class UnsupportedPenaltyError(MatregError, TypeError):
    """An object without a proximal mapping was passed where one is needed."""


class CsvFormatError(MatregError, ValueError):
    """A CSV input could not be parsed."""

    def __init__(self, path: str, message: str, row: int | None = None, column: int | None = None):
        self.path = path
        self.row = row
        self.column = column
        where = path
        if row is not None:
            where += f", row {row}"
        if column is not None:
            where += f", column {column}"
        super().__init__(f"{where}: {message}")


class ConfigError(MatregError, ValueError):
    """An experiment configuration is invalid."""


class SolverError(MatregError, RuntimeError):
    """A solver broke down numerically."""

    def __init__(self, message: str, **diagnostics: Any):
        self.diagnostics = diagnostics
        if diagnostics:
            details = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)
