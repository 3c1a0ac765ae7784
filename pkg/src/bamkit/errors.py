"""Exception hierarchy shared across the toolkit.

Every error raised on purpose derives from BamError so callers can catch
one base class. The CLI maps subclasses to distinct process exit codes.
"""


class BamError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(BamError):
    """An array has the wrong dimensionality, length, or dtype family."""


class UsageError(BamError):
    """An operation was called with arguments that violate its contract."""


class ConfigError(BamError):
    """A run configuration is malformed or internally inconsistent."""


class OracleError(BamError):
    """The prediction backend failed (transport error, bad response, ...)."""


class TrainingError(BamError):
    """Optimization diverged or produced non-finite values."""
