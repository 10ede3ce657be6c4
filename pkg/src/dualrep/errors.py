"""Error types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value (bad spec field, temperature <= 0, empty queue, ...)."""


class ClipRangeError(ValueError):
    """Requested clip window does not fit inside the source video."""


class ShapeError(ValueError):
    """Mismatched or non-divisible shapes (segments, parameter manifests, ...)."""


class NormalizationError(ValueError):
    """A vector that must be unit-norm is not (or cannot be normalized)."""


class TrainingDivergedError(RuntimeError):
    """A loss became NaN during training; diagnostics are dumped before raising."""
