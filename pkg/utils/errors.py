"""Exception types shared by the evaluation modules and the CLI exit-code mapping."""

from __future__ import annotations


class DfEvalError(Exception):
    """Base class for every error raised deliberately by this package."""

    exit_code = 1


class ConfigError(DfEvalError, ValueError):
    """Invalid parameters, bounds or configuration values."""

    exit_code = 2


class DataValidationError(DfEvalError, ValueError):
    """Far-field or grid data that does not satisfy the data model."""

    exit_code = 3


class DegeneracyError(DfEvalError, ArithmeticError):
    """Numerically degenerate input (zero-norm column, unidentifiable azimuth, ...)."""

    exit_code = 4
