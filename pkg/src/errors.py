"""
Exception types raised by the library. The CLI maps every ChainRecurrenceError
to exit code 2; failed checks are reported, not raised.
"""


class ChainRecurrenceError(Exception):
    """Base class for all input and precondition errors."""


class InvalidResolutionError(ChainRecurrenceError, ValueError):
    pass


class InvalidDomainError(ChainRecurrenceError, ValueError):
    pass


class OutOfDomainError(ChainRecurrenceError, ValueError):
    pass


class EmptySetError(ChainRecurrenceError, ValueError):
    pass


class CutoffTooSmallError(ChainRecurrenceError, ValueError):
    pass


class PreconditionError(ChainRecurrenceError, ValueError):
    pass


class ConfigError(ChainRecurrenceError, ValueError):
    """Malformed run configuration. `location` is 'line N' or 'section.key'."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class IntegrationError(ChainRecurrenceError, RuntimeError):
    pass
