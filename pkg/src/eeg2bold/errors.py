"""Error taxonomy shared across the package.

Every failure mode maps onto one of four classes so the CLI can turn them
into stable exit codes: ConfigError (2), DataError (3), NumericError (4).
DimensionError is a DataError because shape mismatches are a property of
the data actually passed in, not of the configuration.
"""


class Eeg2BoldError(Exception):
    """Base class for all package errors."""


class ConfigError(Eeg2BoldError):
    """Invalid configuration value or unparseable config input."""


class DataError(Eeg2BoldError):
    """Malformed, inconsistent, or insufficient data."""


class DimensionError(DataError):
    """Array shape incompatible with the requested operation."""


class NumericError(Eeg2BoldError):
    """Numerical failure: non-finite values, singular systems, diverged runs."""
