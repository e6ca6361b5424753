"""Exception types shared across the package."""


class RelsarError(Exception):
    """Base class for all package errors."""


class ShapeError(RelsarError, ValueError):
    """Tensor extents are incompatible with the requested operation."""


class DegenerateInputError(RelsarError, ValueError):
    """Input has no usable extent (zero norm, coincident joints, ...)."""


class ConfigError(RelsarError, ValueError):
    """A configuration value is invalid or missing."""


class ManifestError(RelsarError, ValueError):
    """A dataset manifest or keypoint file is malformed."""


class NonFiniteError(RelsarError, FloatingPointError):
    """A NaN or Inf appeared during training."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path


class CheckpointError(RelsarError, ValueError):
    """A checkpoint cannot be loaded into the requested configuration."""
