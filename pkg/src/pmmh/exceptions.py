"""Exception hierarchy; the CLI maps each family to its own exit code."""


class PMMHError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(PMMHError, ValueError):
    """Malformed or inconsistent run configuration."""


class DataError(PMMHError, ValueError):
    """Unreadable or invalid observation data."""


class StationarityError(PMMHError, ValueError):
    """An AR coefficient lies outside (-1, 1) where a stationary law is needed."""


class DegeneracyError(PMMHError, FloatingPointError):
    """All particle weights vanished (or went non-finite) at some time step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StartupError(PMMHError, RuntimeError):
    """The chain could not be initialised at a point of positive density."""
