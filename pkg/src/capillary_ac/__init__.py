"""Mass-constrained Allen-Cahn with contact-angle boundary conditions on planar domains."""

__version__ = "0.1.0"

from .errors import (ConvergenceError, DegenerateLinearizationError, DomainError,  # noqa: F401
                     RejectedInputError)
