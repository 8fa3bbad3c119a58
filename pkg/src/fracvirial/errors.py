"""Exception hierarchy.

Every error raised on purpose by the package derives from FracVirialError so
callers (and the CLI exit-code mapping) can tell them apart from bugs.
"""


class FracVirialError(Exception):
    """Base class for all package errors."""


class InputError(FracVirialError, ValueError):
    """Rejected input: non-finite values, wrong shapes, bad parameters."""


class DomainError(FracVirialError, ValueError):
    """A parameter lies outside the range where an operation is defined."""


class QuadratureError(FracVirialError, ArithmeticError):
    """The m-integral did not reach the requested tolerance."""

    def __init__(self, message, residual=None, panel_residuals=None, node_index=None):
        super().__init__(message)
        self.residual = residual
        self.panel_residuals = panel_residuals
        self.node_index = node_index


class SupportError(FracVirialError, ValueError):
    """A cutoff does not fit inside the periodic box."""


class BoxSizeError(FracVirialError, ValueError):
    """Field mass near the box boundary is too large for the periodic proxy."""


class ConstructionError(FracVirialError):
    """A cutoff profile failed one of its verified properties."""


class ConvergenceError(FracVirialError, ArithmeticError):
    """An iterative solver diverged or stalled."""


class ProjectionError(ConvergenceError):
    """A positivity-preserving iteration produced negative values."""


class ConsistencyError(FracVirialError, ArithmeticError):
    """Two routes to the same quantity disagree beyond tolerance."""


class SymmetryError(FracVirialError, ValueError):
    """A field that must be radially symmetric is not."""


class FitRejectedError(FracVirialError, ValueError):
    """Series does not satisfy the preconditions of the collapse fit."""


class LeakageError(FracVirialError, ArithmeticError):
    """Mass reached the edge of the periodic box during a run."""


class InstabilityError(FracVirialError, ArithmeticError):
    """Conservation drift exceeded the allowed multiple of the tolerance."""
