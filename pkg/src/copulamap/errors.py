"""Exception and warning types shared across the package."""


class CopulamapError(Exception):
    """Base class for errors raised by this package."""


class ParseError(CopulamapError):
    """Malformed input text (bad cell, bad header, bad plan file)."""


class ValidationError(CopulamapError):
    """Input violates a documented precondition or invariant."""


class DimensionError(ValidationError):
    """Input has too few rows/columns or mismatched shapes."""


class UnsupportedDataError(ValidationError):
    """Input kind is not supported by the requested method."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped before reaching its tolerance."""


class NumericalWarning(UserWarning):
    """A numerically degenerate quantity was clamped to a safe value."""
