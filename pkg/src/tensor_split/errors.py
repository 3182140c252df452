"""Exception hierarchy shared by every module."""


class TensorSplitError(Exception):
    """Base class for all library errors."""


class GridError(TensorSplitError, ValueError):
    """Invalid grid parameters."""


class MismatchError(TensorSplitError, ValueError):
    """Fields of different kinds or on different grids were combined."""


class MetricError(TensorSplitError, ValueError):
    """A metric specification or sampled metric is not positive-definite."""


class SolverError(TensorSplitError, RuntimeError):
    """An iterative solve or eigen-iteration failed to converge."""


class InconsistentRHSError(SolverError):
    """The right-hand side has a significant component in the operator kernel."""


class ConfigError(TensorSplitError, ValueError):
    """Unreadable or invalid run configuration."""
