"""Exception and warning types raised by the solvers."""


class RomAccelError(Exception):
    """Base class for all package errors."""


class DimensionError(RomAccelError, ValueError):
    pass


class SingularMatrix(RomAccelError):
    """A dense solve met a pivot below the singularity threshold."""

    def __init__(self, message, pivot=0.0, block=None):
        super().__init__(message)
        self.pivot = pivot
        self.block = block


class SingularGram(RomAccelError):
    """The weight system stayed singular after regularization."""


class NotSymmetric(RomAccelError, ValueError):
    pass


class Diverged(RomAccelError):
    """Iterates or residuals left the representable / admissible range."""


class ZeroCurvature(RomAccelError, ZeroDivisionError):
    """A step-size quotient has a vanishing denominator."""


class IndefiniteBreakdown(RomAccelError):
    """Conjugate gradient met (p, Ap) <= 0 in SPD mode."""


class NoDescent(RomAccelError):
    """The merit gate rejected every reduced Gauss-Newton step."""


class ConfigError(RomAccelError, ValueError):
    pass


class DegenerateSubspace(RuntimeWarning):
    """Search directions are (numerically) collinear; a fallback was used."""
