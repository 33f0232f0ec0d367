"""Exception and warning types shared across the package."""

from __future__ import annotations


class Invar3Error(Exception):
    """Base class for all errors raised by this package."""


class ParseError(Invar3Error):
    """Syntax error in a coefficient expression.

    Carries the byte offset of the failure and the set of token kinds
    that would have been accepted there.
    """

    def __init__(self, message: str, offset: int, expected: set[str] | None = None):
        super().__init__(f"{message} at offset {offset}"
                         + (f" (expected one of: {', '.join(sorted(expected))})" if expected else ""))
        self.offset = offset
        self.expected = expected or set()


class UnknownIdentifierError(ParseError):
    """An identifier other than x, y or a known function name."""

    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


class DomainEvalError(Invar3Error):
    """Evaluation left the real domain (log of a non-positive value, division
    by a series with zero constant term, even root of a negative, ...)."""


class OrderMismatchError(Invar3Error):
    """Jet orders of the operands are incompatible for the requested operation."""


class JetOrderError(Invar3Error):
    """Input jets do not carry enough derivatives for the requested operation."""


class SingularSymbolError(Invar3Error):
    """The cubic symbol has (numerically) vanishing discriminant."""


class RegularityError(Invar3Error):
    """A pointwise regularity condition required by a construction failed.

    ``conditions`` lists the failed requirements by name so callers can tell
    a vanishing torsion covector from a null one, a vanishing curvature form
    from a degenerate quadratic form, and so on.
    """

    def __init__(self, message: str, conditions: list[str]):
        super().__init__(f"{message}: {', '.join(conditions)}")
        self.conditions = conditions


class GeneralPositionError(Invar3Error):
    """No pair of candidate invariants is functionally independent on enough
    of the sampled domain."""


class InverseMismatchError(Invar3Error):
    """The supplied forward and inverse maps are not mutually inverse on the
    working window."""


class ZeroCrossingError(Invar3Error):
    """A multiplier that must stay away from zero crosses (or touches) zero
    on the working window."""


class NonPositiveScaleError(Invar3Error):
    """The normalization multiplier is not positive at the requested point."""


class ConditioningWarning(UserWarning):
    """A dense solve met a condition number above the configured threshold."""
