"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class VolnetError(Exception):
    """Base class for all package errors."""


class ConfigError(VolnetError, ValueError):
    """Invalid configuration or invalid arguments to an operation."""


class DataError(VolnetError, ValueError):
    """Input data violates a documented precondition or invariant."""


class NumericalError(VolnetError, RuntimeError):
    """A numerical procedure failed beyond repair (singularity, instability)."""
