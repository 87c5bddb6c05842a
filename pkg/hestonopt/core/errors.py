"""
Exception hierarchy shared by the numerical tools and the CLI
"""
from typing import Any, Dict, List, Optional


class HestonOptError(Exception):
    """Base class for all errors raised by hestonopt"""


class DomainError(HestonOptError, ValueError):
    """An argument lies outside the domain of the operation"""


class ParameterValidationError(DomainError):
    """Model parameters or utility violate their invariants"""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class EvaluationError(HestonOptError):
    """A series failed to converge"""

    def __init__(self, message: str, terms: int):
        self.terms = terms
        super().__init__(f"{message} (after {terms} terms)")


class NumericalInstabilityError(HestonOptError):
    """Non-finite values appeared during a time march"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message}: {self.diagnostics}" if self.diagnostics else message)


class DegenerateCoefficientError(DomainError):
    """The 3/2 bond mapping is singular for the given constants"""


class StepSizeError(NumericalInstabilityError):
    """Too many simulated paths left the admissible region"""
