"""Shared exception types."""

from __future__ import annotations


class LocalGDError(Exception):
    """Base class for package-specific errors."""


class ParseError(LocalGDError, ValueError):
    """Malformed sparse-dataset input; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConvergenceError(LocalGDError, RuntimeError):
    """An iterative solver exhausted its iteration budget.

    ``achieved`` holds the residual (or estimate) at the point of failure
    and ``result`` the partial output, so callers can decide whether the
    degraded answer is still usable.
    """

    def __init__(self, message: str, *, achieved=None, result=None):
        super().__init__(message)
        self.achieved = achieved
        self.result = result


class DivergenceError(LocalGDError, RuntimeError):
    """A trajectory produced a non-finite value; carries the first bad step."""

    def __init__(self, step: int):
        super().__init__(f"non-finite iterate first produced at step {step}")
        self.step = step


class PreconditionError(LocalGDError, ValueError):
    """A check was invoked outside the stepsize range where its claim holds."""
