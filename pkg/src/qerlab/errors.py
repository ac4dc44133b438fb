"""Exception types shared across the package."""


class QerError(Exception):
    """Base class for all package errors."""


class RangeError(QerError, ValueError):
    """Arclength parameter outside [0, L)."""


class DomainError(QerError, ValueError):
    """Coball coordinate outside the closed unit ball."""


class GeometryError(QerError, ValueError):
    """A point that should lie on a curve (or inside a domain) does not."""


class TrajectoryAbort(QerError):
    """A billiard trajectory hit a corner or a curvature junction."""


class NumericalError(QerError, ArithmeticError):
    """A quadrature or root refinement failed to converge."""


class SolverError(QerError):
    """The eigensolver did not meet its residual contract."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class InsufficientSpectrum(QerError, ValueError):
    """Too few eigenvalues for a spectral statistic."""


class ConfigError(QerError, ValueError):
    """Invalid run configuration."""

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = tuple(keys)


class DependencyError(QerError):
    """A subcommand was run before the one that produces its input."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required
