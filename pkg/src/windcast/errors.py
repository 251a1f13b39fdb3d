"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data problems exit with 2,
convergence / explosive-simulation problems with 3, configuration
problems with 4.
"""


class WindcastError(Exception):
    """Base class for all package errors."""


class DataQualityError(WindcastError):
    """Input data violates a documented contract (spacing, ranges, gap budget)."""


class UnfillableGapError(DataQualityError):
    """Missing values at the series ends cannot be interpolated."""


class ConfigurationError(WindcastError):
    """Invalid or inconsistent configuration values."""


class InsufficientDataError(WindcastError):
    """Series too short for the requested lag structure or horizon."""


class NumericalInputError(WindcastError):
    """Non-finite values where finite numbers are required."""


class DegenerateProblemError(WindcastError):
    """A well-formed but unsolvable problem (all-zero weights, empty pools)."""


class ConvergenceError(WindcastError):
    """An iterative procedure failed to converge and no usable result exists."""


class ExplosiveSimulationError(WindcastError):
    """Synthetic recursion diverged; carries companion-matrix diagnostics."""

    def __init__(self, message: str, spectral_radius: float | None = None):
        super().__init__(message)
        self.spectral_radius = spectral_radius
