"""Exception types raised by the numerical core."""


class SingularSystemError(ValueError):
    """An unregularized linear system is too ill-conditioned to solve."""


class EnumerationBudgetError(ValueError):
    """An exact computation would exceed its combinatorial budget."""


class EmptyTrajectoryError(ValueError):
    """No trajectory data is available to anchor an update."""


class FilterDivergenceError(RuntimeError):
    """A filter run produced non-finite values and was aborted."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
