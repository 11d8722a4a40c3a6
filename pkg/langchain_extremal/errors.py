"""Exception hierarchy for langchain-extremal.

Every error is a ``ValueError`` so callers that only guard against rejected
inputs keep working.
"""
from typing import Any, Dict, Optional


class ExtremalError(ValueError):
    """Base class for all domain errors."""


class DimensionMismatchError(ExtremalError):
    pass


class OutsideBallError(ExtremalError):
    """A point (or a mapping value) lies outside the unit ball."""


class NotNonexpansiveError(ExtremalError):
    pass


class ConvergenceError(ExtremalError):
    pass


class CertificateError(ExtremalError):
    """A decomposition certificate failed its own verification."""


class HypothesisError(ExtremalError):
    """The hypotheses of a construction are not satisfied."""


class WitnessFailureError(ExtremalError):
    """A witness inequality that must hold strictly did not."""


class MappingDocumentError(ExtremalError):
    pass


class NoPairFoundError(ExtremalError):
    def __init__(self, message: str, best_ratio: float):
        super().__init__(message)
        self.best_ratio = best_ratio


class DegenerateWitnessError(ExtremalError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CertificationError(ExtremalError):
    """A probe inside the porosity ball admitted a valid decomposition."""

    def __init__(self, message: str, certificate: Any = None):
        super().__init__(message)
        self.certificate = certificate
