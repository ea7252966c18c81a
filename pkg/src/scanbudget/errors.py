"""Shared exception types."""


class ScanBudgetError(Exception):
    """Base class for errors raised by this package."""


class CodecError(ScanBudgetError, ValueError):
    """Raster file does not conform to the expected PGM layout."""


class ConfigError(ScanBudgetError, ValueError):
    """Invalid or inconsistent experiment configuration (CLI exit code 2)."""


class NumericalError(ScanBudgetError, RuntimeError):
    """Degenerate or failed numerical computation (CLI exit code 3)."""
