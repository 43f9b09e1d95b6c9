"""Exception types raised across the package."""


class RejectedInputError(ValueError):
    """Input outside the accepted set (non-finite values, bad sizes)."""


class DomainError(ValueError):
    """Parameter outside its admissible range."""


class ConfigurationError(ValueError):
    """Inconsistent run configuration."""


class DegenerateWellError(ValueError):
    """Double well whose minima are not strictly convex."""


class GeometricInfeasibilityError(ValueError):
    """No capillary curve in the requested family."""


class BandTooWideError(ValueError):
    """Twisted chart fails to be a diffeomorphism on the requested band."""


class ChartCoverageError(ValueError):
    """A point required by the caller is not covered by the chart."""


class NotApplicableError(ValueError):
    """Measurement requested where it has no meaning."""


class EmptyNodalSetError(ValueError):
    """Field without a sign change."""


class FitError(ValueError):
    """Too few or unusable samples for a regression."""


class ResourceError(MemoryError):
    """Requested discretization exceeds the memory budget."""


class QuadratureError(RuntimeError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class NumericError(RuntimeError):
    """Internal numerical failure (eigensolver, inconsistent paths)."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, history=None, epsilon=None):
        super().__init__(message)
        self.history = list(history or [])
        self.epsilon = epsilon


class DegenerateLinearizationError(RuntimeError):
    def __init__(self, message, epsilon=None):
        super().__init__(message)
        self.epsilon = epsilon
