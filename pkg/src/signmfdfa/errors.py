"""Exception hierarchy.

Every error carries a short ``reason`` token (the class name) that the CLI
prints verbatim, and an ``exit_code`` grouping it into data errors (3) or
numerical refusals (4).
"""

from __future__ import annotations


class MFDFAError(Exception):
    exit_code = 1

    @property
    def reason(self) -> str:
        return type(self).__name__


class UsageError(MFDFAError, ValueError):
    """Invalid configuration or parameters."""

    exit_code = 2


class DataError(MFDFAError, ValueError):
    exit_code = 3


class EmptyInput(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class NonMonotonicTimestamps(DataError):
    pass


class MissingTimestamps(DataError):
    pass


class ParseError(DataError):
    pass


class NumericalRefusal(MFDFAError, ArithmeticError):
    exit_code = 4


class ScaleTooLarge(NumericalRefusal):
    pass


class TooFewPoints(NumericalRefusal):
    pass


class SingularFit(NumericalRefusal):
    pass


class AllSegmentsExcluded(NumericalRefusal):
    pass


class InsufficientScales(NumericalRefusal):
    pass


class NonFiniteSurface(NumericalRefusal):
    pass


class GridTooSmall(NumericalRefusal):
    pass


class GridMismatch(NumericalRefusal):
    pass


class EmbeddingNotPositive(NumericalRefusal):
    pass
