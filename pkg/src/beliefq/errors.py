"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A model parameter lies outside its admissible domain."""


class DegenerateObservationError(ValueError):
    """A belief update was requested for an observation of probability zero."""


class DegenerateTransformError(ValueError):
    """A belief operator has no interior stable fixed point for these parameters."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
