"""Exception types raised across the package."""


class ZslError(Exception):
    """Base class for all package errors."""


class ShapeError(ZslError, ValueError):
    """Array dimensions do not match what an operation requires."""


class StateError(ZslError, RuntimeError):
    """Operation called in the wrong order (e.g. backward before forward)."""


class DegenerateBatchError(ZslError, ValueError):
    """Batch statistics cannot be computed (batch of size < 2)."""


class NumericalError(ZslError, ArithmeticError):
    """A non-finite value appeared where finite math was required."""


class ConfigError(ZslError, ValueError):
    """Invalid configuration value."""


class DataError(ZslError, ValueError):
    """Dataset files or contents violate the documented format."""


class MetricError(ZslError, ValueError):
    """Evaluation metric cannot be computed from the given inputs."""


class MiningError(ZslError, ValueError):
    """Negative mining is impossible (fewer than two candidate classes)."""


class CheckpointFormatError(ZslError, ValueError):
    """Checkpoint file is corrupt, truncated, or has the wrong version."""
