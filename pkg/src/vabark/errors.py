"""Exception hierarchy shared across the package."""


class VabarkError(Exception):
    """Base class for all package-specific errors."""


class DecodeError(VabarkError):
    """Raised when a WAV file cannot be parsed."""


class UnsupportedFormatError(DecodeError):
    """Raised for WAV encodings outside PCM16 / IEEE float32 mono-stereo."""


class ConfigError(VabarkError):
    """Invalid configuration value, unknown config key, or shape mismatch."""


class AnchorFitError(VabarkError):
    """Degenerate feature distribution; message names the offending feature."""


class DegenerateInputError(VabarkError):
    """Statistic undefined for the given input (e.g. constant Pearson series)."""


class SplitError(VabarkError):
    """Stratified split cannot be formed (class too small, bad fractions)."""


class TrainingDivergedError(VabarkError):
    """Non-finite loss encountered; a diagnostic snapshot was written."""


class CliUserError(VabarkError):
    """User-facing CLI error; maps to exit code 1."""
