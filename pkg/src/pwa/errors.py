"""Typed error hierarchy shared across the package.

Errors carry the CLI exit code they map onto: usage problems exit 2,
malformed or inconsistent data exits 3, numeric degeneracies exit 4.
"""


class PwaError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class UsageError(PwaError):
    """The caller asked for something infeasible (bad parameter, missing input)."""

    exit_code = 2


class DataFormatError(PwaError):
    """A file or record violates its declared format or data invariants."""

    exit_code = 3


class BadMagicError(DataFormatError):
    """File does not start with the expected magic bytes."""


class VersionError(DataFormatError):
    """File declares an unsupported format version."""


class TruncatedFileError(DataFormatError):
    """File payload is shorter or longer than its header declares."""


class InvalidValueError(DataFormatError):
    """Values violate an invariant (negative activation, NaN, mixed dims, ...)."""


class DegeneracyError(PwaError):
    """A numeric degeneracy (zero vector, zero spread) blocks the operation."""

    exit_code = 4
