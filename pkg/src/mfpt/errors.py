class MfptError(Exception):
    """Base class for all errors raised by this package."""


class ManifestError(MfptError):
    """Malformed manifest, missing file or inconsistent record."""


class ConfigError(MfptError):
    """Invalid model/training/triage configuration."""


class ShapeError(MfptError, ValueError):
    """Array shapes that do not agree."""


class NumericError(MfptError):
    """Non-finite values produced during optimisation."""
