"""Exception taxonomy shared across the package.

Each class carries the process exit code the command line runner maps it to,
so library errors and CLI exit semantics cannot drift apart.
"""

from __future__ import annotations


class BenchmarkPricerError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(BenchmarkPricerError):
    """Invalid configuration or argument domain (bad JSON, out-of-range value)."""

    exit_code = 2


class ModelAssumptionError(BenchmarkPricerError):
    """A structural model assumption is violated (rank failure, unsupported shape)."""

    exit_code = 3


class NumericalError(BenchmarkPricerError):
    """Numerical failure during computation (non-finite values, no bracket found)."""

    exit_code = 4
