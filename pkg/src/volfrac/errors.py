"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
SolverConvergenceError -> 3, DataInconsistencyError -> 4.
"""


class VolfracError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(VolfracError):
    """Invalid scenario configuration or CLI usage."""


class SolverConvergenceError(VolfracError):
    """Linear solve failed to reach the requested residual."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class DataInconsistencyError(VolfracError):
    """Measured data violate a structural inequality beyond tolerance."""


class MeasurementDegeneracyError(VolfracError):
    """The three measurements are not independent enough to normalize."""


class SingularTranslationError(VolfracError):
    """Translation parameter makes a tensor singular; use the limit tensor."""


class InvalidInputError(VolfracError):
    """Input field violates a precondition (divergence, periodicity, match)."""
