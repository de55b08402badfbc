"""Exception types shared across the package."""

__all__ = [
    "KembedError",
    "InvalidSpecError",
    "UnsupportedPairError",
    "NumericalFailure",
]


class KembedError(Exception):
    """Base class for package errors."""


class InvalidSpecError(KembedError, ValueError):
    """A kernel/measure/problem description is malformed or out of domain."""


class UnsupportedPairError(KembedError):
    """The requested kernel/measure combination cannot be evaluated."""


class NumericalFailure(KembedError):
    """A numerical routine failed beyond its recovery ladder."""
