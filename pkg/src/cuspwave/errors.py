"""Exception types raised across the package."""


class CuspwaveError(Exception):
    pass


class InvalidCutoffError(CuspwaveError, ValueError):
    pass


class DegenerateConfigurationError(CuspwaveError, ValueError):
    """Two point charges sit on the same lattice site."""


class DimensionError(CuspwaveError, ValueError):
    """A field lives on a different basis than the operator expects."""


class OracleScaleError(CuspwaveError, ValueError):
    pass


class ConvergenceError(CuspwaveError, RuntimeError):
    """Iterative eigensolver stopped before reaching the residual tolerance.

    ``solution`` carries the best iterate so callers can still report it.
    """

    def __init__(self, message, residuals=None, iterations=None, solution=None):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations
        self.solution = solution


class AnchorError(CuspwaveError, ValueError):
    pass


class PhaseError(CuspwaveError, ValueError):
    pass


class DivergentSumError(CuspwaveError, ValueError):
    pass


class ShellError(CuspwaveError, ValueError):
    pass


class ConfigMismatchError(CuspwaveError, ValueError):
    pass


class AlignmentError(CuspwaveError, ValueError):
    pass


class DomainError(CuspwaveError, ValueError):
    pass


class InsufficientDataError(CuspwaveError, ValueError):
    pass


class ConfigError(CuspwaveError, ValueError):
    """Invalid experiment configuration; ``where`` names the field or line."""

    def __init__(self, message, where=None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


class ResourceGuardError(CuspwaveError, RuntimeError):
    pass
