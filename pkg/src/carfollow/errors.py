"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: I/O problems -> 2, file/format
problems -> 3, configuration problems -> 4.
"""


class CarfollowError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CarfollowError):
    """Fatal problem with an input file (wrong schema, empty, duplicates)."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class LibraryError(ParseError):
    """Cluster library file does not satisfy the documented CSV format."""


class ConfigError(CarfollowError):
    """Invalid pipeline configuration (unknown key, bad type or value)."""


class DomainError(CarfollowError):
    """Model evaluated outside its mathematical domain."""


class StateUnavailableError(CarfollowError):
    """Delayed state requested before the start of the available history."""


class FitError(CarfollowError):
    """Episode could not be fitted (no scoreable cluster, missing group)."""


class InternalError(CarfollowError):
    """Invariant that must hold by construction was violated."""
