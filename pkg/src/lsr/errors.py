"""Shared exception types."""


class LsrError(Exception):
    """Base class for all package errors."""


class DataError(LsrError):
    """Malformed or inconsistent input data (files, ids, formats)."""


class ShapeError(LsrError):
    """Dimension mismatch between tensors or representations."""


class ConfigError(LsrError):
    """Invalid or unknown configuration."""
