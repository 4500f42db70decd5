"""Exception hierarchy.

Everything raised on purpose by this package derives from :class:`EbfkitError`.
Conditions that reflect a numerical breakdown (as opposed to malformed input)
additionally derive from :class:`NumericalError`, which the command line layer
maps to its own exit code.
"""

from __future__ import annotations


class EbfkitError(Exception):
    """Base class for all errors raised by ebfkit."""


class NumericalError(EbfkitError):
    """A computation failed for numerical reasons rather than bad input."""


class MissingSlot(EbfkitError):
    """A covariance structure referenced a parameter slot that was not supplied."""

    def __init__(self, slot: str, context: str = ""):
        self.slot = slot
        msg = f"missing parameter slot {slot!r}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class NotPositiveDefinite(NumericalError):
    """A matrix required to be positive-definite failed its Cholesky check."""


class SingularSystem(NumericalError):
    """A linear system was too ill-conditioned to solve reliably."""


class DimensionMismatch(EbfkitError):
    """Array shapes or declared dimensions are inconsistent."""


class EmptyDraws(EbfkitError):
    """An operation over posterior draws received zero draws."""


class AllDrawsDegenerate(NumericalError):
    """Every posterior draw produced a degenerate (non-PD) covariance."""


class ExcessDegenerateDraws(NumericalError):
    """More than the tolerated share of posterior draws were degenerate."""


class ParseError(EbfkitError):
    """A text input could not be parsed.

    Carries the 1-based ``line`` and ``column`` of the offending field when
    known (0 means not applicable).
    """

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        loc = ""
        if line:
            loc = f" (line {line}" + (f", column {column})" if column else ")")
        super().__init__(message + loc)


class NonFiniteValue(ParseError):
    """A parsed numeric field was NaN or infinite."""


class DuplicateColumn(EbfkitError):
    """Two columns in a draws file share a name."""


class MissingColumn(EbfkitError):
    """A manifest referenced a draws column that does not exist."""


class TooShort(EbfkitError):
    """A series is too short for the requested diagnostic."""


class EmptyInput(EbfkitError):
    """An aggregation received no values."""


class DegenerateConditional(NumericalError):
    """A Gibbs full conditional became improper or numerically invalid.

    ``iteration`` is the 0-based scan index at which the failure occurred,
    or -1 when the problem was detected before sampling started.
    """

    def __init__(self, message: str, iteration: int = -1):
        self.iteration = iteration
        if iteration >= 0:
            message += f" (iteration {iteration})"
        super().__init__(message)


class TooManyFailures(NumericalError):
    """Too many replications of a simulation cell failed."""
