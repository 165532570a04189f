from __future__ import annotations

from typing import List, Optional, Sequence


class LegalRiskError(Exception):
    """Base exception for model, solver and simulation errors."""


class ValidityError(LegalRiskError):
    """Raised when a regime/market pair falls outside a solver's hypotheses."""

    def __init__(self, message: str, report: Optional[Sequence[str]] = None):
        super().__init__(message)
        self.report: List[str] = list(report or [])


class DomainError(LegalRiskError):
    """Raised when a special function is evaluated outside its domain."""


class QuadratureError(LegalRiskError):
    """Raised when an integrand is non-finite on the integration interval."""


class BracketError(LegalRiskError):
    """Raised when a root finder is handed an interval without a sign change."""


class ShootingDivergence(LegalRiskError):
    """Raised when the shooting iteration exhausts its budget."""

    def __init__(self, message: str, residuals: Sequence[float] = (), iterate: Sequence[float] = ()):
        super().__init__(message)
        self.residuals = tuple(residuals)
        self.iterate = tuple(iterate)


class FitError(LegalRiskError):
    """Raised when a log-log fit has too few usable samples."""


class ConfigError(LegalRiskError):
    """Raised for unreadable configs and invalid simulation grids."""


class DivisionError(LegalRiskError):
    """Raised when a closed form divides by a vanishing penalty scale."""
