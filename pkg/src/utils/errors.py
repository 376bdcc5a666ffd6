# src/utils/errors.py
"""gds_thermo 的异常层次。

所有异常都继承 ``ValueError``，只认识 ``ValueError`` 的调用方也能捕获。
"""
from typing import Optional


class GdsError(ValueError):
    """Base class for every error raised by the package."""


class ShapeError(GdsError):
    """Matrix or vector dimensions do not match the mode count."""


class NotSymmetricError(GdsError):
    def __init__(self, what: str, defect: float):
        self.defect = float(defect)
        super().__init__(f"{what} is not symmetric (max asymmetry {self.defect:.3e})")


class NotPositiveDefiniteError(GdsError):
    def __init__(self, what: str, smallest_eigenvalue: float):
        self.smallest_eigenvalue = float(smallest_eigenvalue)
        super().__init__(
            f"{what} is not positive definite (smallest eigenvalue {self.smallest_eigenvalue:.3e})"
        )


class PureStateBoundaryError(GdsError):
    def __init__(self, kappa: float, margin: float):
        self.kappa = float(kappa)
        self.margin = float(margin)
        super().__init__(
            f"pure-state boundary: symplectic eigenvalue {self.kappa:.12g} "
            f"is not above 1/2 + {self.margin:.1e}"
        )


class NotHurwitzError(GdsError):
    def __init__(self, abscissa: float, message: Optional[str] = None):
        self.abscissa = float(abscissa)
        super().__init__(message or f"drift matrix is not Hurwitz (spectral abscissa {self.abscissa:.3e})")


class NoStationaryStateError(NotHurwitzError):
    def __init__(self, abscissa: float):
        super().__init__(
            abscissa, f"no stationary state: spectral abscissa {float(abscissa):.3e} is not negative"
        )


class IntegrationError(GdsError):
    def __init__(self, message: str, max_residual: float):
        self.max_residual = float(max_residual)
        super().__init__(f"{message} (max residual {self.max_residual:.3e})")


class TraceDriftError(IntegrationError):
    """Truncated density matrix lost trace; the cutoff is too small for the run."""


class AuditFailedError(GdsError):
    """A consistency audit did not pass."""


class RegimeError(GdsError):
    """A limit regime was requested with parameters it cannot describe."""


class CutoffBudgetError(GdsError):
    """Truncated Fock space exceeds the supported dimension."""


class ConfigError(GdsError):
    """Invalid configuration value (environment or model file)."""


class LinearSolveError(GdsError):
    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = float(residual)
        super().__init__(f"{message} (residual {self.residual:.3e})")


class NotBonaFideError(GdsError):
    """Covariance matrix violates V + (i/2)J >= 0."""

    def __init__(self, what: str, margin: float):
        self.margin = float(margin)
        super().__init__(f"{what} is not a bona fide covariance (min eig of V + iJ/2 = {self.margin:.3e})")
