"""Shared exception types.

Every error raised by this package derives from DiffuqError so callers can
catch library failures without swallowing programming errors.
"""


class DiffuqError(Exception):
    """Base class for all package errors."""


class ConfigError(DiffuqError):
    """Invalid, unknown, or missing configuration value."""


class DimensionError(DiffuqError):
    """Array shape does not match what an operation requires."""


class NumericalError(DiffuqError):
    """A computation produced NaN/inf or otherwise left the valid domain."""


class DataError(DiffuqError):
    """A dataset file or split is malformed."""


class CheckpointError(DiffuqError):
    """A checkpoint file is unreadable or inconsistent."""
