"""Exception types shared across the package."""

from __future__ import annotations

from typing import Sequence


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class PreconditionError(ValueError):
    """A structural requirement on the problem (not a single argument) fails."""


class DegenerateInputError(ValueError):
    """The input makes the requested quantity undefined (zero denominator etc.)."""


class NumericalOverflowError(ArithmeticError):
    """A forward step produced a non-finite state."""


class NumericalError(ArithmeticError):
    """A backward solve produced a non-finite value."""


class NonConvergenceError(RuntimeError):
    """An iteration stopped before meeting its tolerance.

    ``residuals`` holds the full trace so callers can persist it.
    """

    def __init__(self, message: str, residuals: Sequence[float]):
        super().__init__(message)
        self.residuals = list(residuals)


class ConfigError(ValueError):
    """Configuration validation failed; ``violations`` lists every problem found."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
