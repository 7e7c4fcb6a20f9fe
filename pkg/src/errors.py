"""Exception types shared by the propagators, the trajectory engine and the CLI.

Numerical failures derive from `SimulationError` (CLI exit status 2);
configuration problems derive from `ConfigError` (exit status 1).
"""
from __future__ import annotations

from typing import Optional


class SimulationError(RuntimeError):
    """Base class for failures raised while propagating states."""


class IntegrationError(SimulationError):
    """The adaptive integrator could not reach the requested time."""

    def __init__(self, message: str, time: float) -> None:
        super().__init__(f"{message} (reached t={time:.6g})")
        self.time = time


class ConsistencyError(SimulationError):
    """A numerical invariant (norm, probability, axis) was violated."""


class ZeroProbabilityJumpError(ConsistencyError):
    """A jump operator annihilated the state it was selected for."""


class ConfigError(ValueError):
    """Invalid run configuration.

    Attributes:
        field: Dotted name of the offending key (empty for syntax errors).
        line: Line of a JSON syntax error, if any.
        column: Column of a JSON syntax error, if any.
    """

    def __init__(
        self,
        message: str,
        field: str = "",
        line: Optional[int] = None,
        column: Optional[int] = None,
    ) -> None:
        if field:
            message = f"{field}: {message}"
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column


class TruncationWarning(UserWarning):
    """Population reached the highest level kept in a truncated basis."""


__all__ = [
    "SimulationError",
    "IntegrationError",
    "ConsistencyError",
    "ZeroProbabilityJumpError",
    "ConfigError",
    "TruncationWarning",
]
