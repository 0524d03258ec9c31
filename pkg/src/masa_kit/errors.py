"""Exception types shared across the package."""


class MasaKitError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MasaKitError, ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class ConfigurationError(MasaKitError, ValueError):
    """A configuration value is outside its legal range."""


class UsageError(MasaKitError, RuntimeError):
    """An API was called in a way its contract forbids."""


class TrainingError(MasaKitError, RuntimeError):
    """Training hit non-finite state; the message names the step."""
