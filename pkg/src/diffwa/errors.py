"""Exception hierarchy shared across the toolkit."""


class DiffwaError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DiffwaError):
    """An input violates an operation's precondition (shape, range, length)."""


class ConfigurationError(DiffwaError):
    """Mismatched or unknown configuration (message length, noise kind, schedule)."""


class NumericError(DiffwaError):
    """A numeric guard tripped (negative variance, division by zero)."""


class TrainingError(DiffwaError):
    """Training diverged. ``last_good`` holds the most recent finite checkpoint state."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class ParseError(DiffwaError):
    """A file on disk does not match its expected format."""


class StartupError(DiffwaError):
    """A run cannot start (missing checkpoint or dataset)."""
