"""Exception types shared by every module."""

from __future__ import annotations


class PreconditionError(ValueError):
    """A numeric precondition of a constructor or bound is not met.

    The message always starts with a short stable phrase (for example
    ``"stepsize-cap violation"``) so callers and the CLI can surface it
    verbatim.
    """


class BoundViolation(RuntimeError):
    """A Monte Carlo estimate exceeded a proven upper bound.

    Attributes
    ----------
    step:
        First step index at which the estimate exceeded the bound.
    """

    def __init__(self, message: str, step: int) -> None:
        super().__init__(message)
        self.step = step


class ConsistencyError(RuntimeError):
    """Two computations of the same quantity disagree."""
