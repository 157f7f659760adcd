"""Exception types shared across the filter library."""


class DegenerateWeightsError(ValueError):
    """Every importance weight underflowed to zero."""


class TransportError(RuntimeError):
    """Exact transport solve failed; carries the solver's residual report."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class SinkhornError(RuntimeError):
    """Sinkhorn iteration failed to converge; carries the marginal error."""

    def __init__(self, message, marginal_error=None):
        super().__init__(message)
        self.marginal_error = marginal_error


class RiccatiError(RuntimeError):
    """Riccati flow diverged or exceeded the step budget."""


class IntegrationError(RuntimeError):
    """Model integration produced a non-finite state."""


class CycleError(RuntimeError):
    """An assimilation cycle failed; message carries cycle index and stage."""
