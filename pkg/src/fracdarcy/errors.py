"""Exception types shared across the package."""


class FracDarcyError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(FracDarcyError):
    """Invalid user input: box/grid mismatch, empty component, bad parameter."""


class GeometryInputError(FracDarcyError):
    """A user-supplied field could not be evaluated (raised, or returned NaN)."""


class DegenerateCutError(FracDarcyError):
    """A cell cut cannot be resolved, e.g. a level set vanishing on all 8 corners."""


class GeometryConsistencyError(FracDarcyError):
    """Reconstructed geometry violates an internal consistency requirement."""


class PreconditionError(FracDarcyError):
    """An operation was called on a mesh/space that violates its preconditions."""


class SolverError(FracDarcyError):
    """Linear solve failed: singular factorization or unmet residual tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
