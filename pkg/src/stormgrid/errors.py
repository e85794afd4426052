"""Exception types shared across the package."""


class StormgridError(Exception):
    """Base class for all errors raised by stormgrid."""


class ValidationError(StormgridError, ValueError):
    """Input data violates a documented invariant.

    ``problems`` holds every offending item found, so callers can report
    them all in one pass instead of stopping at the first.
    """

    def __init__(self, message, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + ":\n  " + "\n  ".join(self.problems)
        super().__init__(message)


class ParseError(ValidationError):
    """A source file is malformed."""


class ConfigError(StormgridError, ValueError):
    """Run configuration is missing or inconsistent."""


class NotFoundError(StormgridError, LookupError):
    """A requested record does not exist."""


class InvalidStateError(StormgridError, RuntimeError):
    """An operation was called on data that is not ready for it."""


class NumericalError(StormgridError, ArithmeticError):
    """A linear solve failed."""
