"""Exception types raised across the package."""


class TocflowError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(TocflowError):
    """A Cholesky factorization met a non-positive pivot."""


class NumericalBreakdown(TocflowError):
    """An iterative solver produced non-finite iterates."""


class ShapeError(TocflowError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class LookaheadDiverged(TocflowError):
    """The Euler lookahead produced a non-finite state."""


class SampleDiverged(TocflowError):
    """A sampling trajectory left the finite range."""

    def __init__(self, step, message=None):
        self.step = int(step)
        super().__init__(message or f"trajectory diverged at step {self.step}")


class TrainingDiverged(TocflowError):
    """The flow-matching loss became non-finite."""

    def __init__(self, iteration):
        self.iteration = int(iteration)
        super().__init__(f"training loss became non-finite at iteration {self.iteration}")


class GridTooSmall(TocflowError, ValueError):
    """The Darcy grid needs at least three points per side."""


class KernelNotPSD(TocflowError):
    """A kernel matrix could not be factorized even after jitter."""


class ConfigError(TocflowError, ValueError):
    """A configuration file or value is invalid."""


class MissingDataset(ConfigError):
    """A referenced dataset artifact does not exist."""


class ExperimentError(TocflowError):
    """A failure inside an experiment driver, tagged with the task name."""

    def __init__(self, task, cause):
        self.task = task
        self.cause = cause
        super().__init__(f"{task}: {type(cause).__name__}: {cause}")
