"""Exception types raised across the package."""


class TeamEstError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TeamEstError, ValueError):
    """Inputs have wrong shapes, values or are mutually inconsistent."""


class InvalidSizeError(InvalidInputError):
    pass


class InvalidScaleError(InvalidInputError):
    pass


class InvalidWindowError(InvalidInputError):
    pass


class UnsupportedPriorError(InvalidInputError):
    pass


class DisconnectedGraphError(InvalidInputError):
    pass


class NotATreeError(InvalidInputError):
    """Raised when an algorithm requiring a tree receives a graph with a cycle.

    ``edge`` holds one edge that closes a cycle, so callers can report it.
    """

    def __init__(self, message: str, edge: tuple[int, int] | None = None):
        super().__init__(message)
        self.edge = edge


class NotACellTreeError(InvalidInputError):
    pass


class GenerationError(TeamEstError, RuntimeError):
    pass


class BuildFailureError(TeamEstError, RuntimeError):
    pass


class InvalidComparisonError(InvalidInputError):
    pass


class ConfigError(InvalidInputError):
    pass


class ScheduleFormatError(TeamEstError, ValueError):
    """A serialized weight container is unreadable or does not match the run."""
