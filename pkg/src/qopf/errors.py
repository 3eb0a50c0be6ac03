"""Exception types shared across the solver modules."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class InfeasibleError(RuntimeError):
    """The constraint set of an optimization problem is empty."""


class SingularMatrixError(RuntimeError):
    """A system matrix is singular or numerically unusable."""
