"""Exception types shared across the package.

Each class maps onto one CLI exit code (see ``lecf.cli``).
"""


class LecfError(Exception):
    exit_code = 2


class UsageError(LecfError, ValueError):
    """Bad arguments: wrong shapes, axes out of range, disabled flags."""

    exit_code = 1


class DomainError(LecfError, ValueError):
    """Input outside the mathematical domain (off-manifold, non-orthogonal...)."""

    exit_code = 3


class DegenerateInputError(DomainError):
    """All-zero weights or another input with no well-defined result."""


class DataError(LecfError):
    """Malformed or inconsistent dataset content."""

    exit_code = 2


class NumericalError(LecfError):
    exit_code = 3
