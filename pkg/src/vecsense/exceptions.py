"""Exception types raised across the package."""


class DegenerateSparsityError(ValueError):
    """The requested sparsity leaves no zero rows or no nonzero rows."""


class VacuousSignalError(ValueError):
    """The reference signal is identically zero."""


class DivergedError(RuntimeError):
    """An iterative solver produced non-finite iterates."""

    def __init__(self, iteration, trace=None):
        self.iteration = iteration
        self.trace = trace or []
        super().__init__(f"diverged at iteration {iteration}")


class ThresholdRangeError(ValueError):
    """A block-soft threshold is too large for the partial moments to be representable."""


class NoTransitionError(ValueError):
    """Outcomes in a delta band are all successes or all failures."""
