"""
Exception hierarchy for kv-plate-lab.

Two roots decide how the CLI reacts:
    - LabValidationError: bad configuration or violated preconditions (exit code 1)
    - LabNumericalError: a computation failed or an invariant did not hold (exit code 2)
"""
from typing import Any, Dict, Optional


class LabValidationError(ValueError):
    """Configuration, precondition or input-format problem."""


class LabNumericalError(RuntimeError):
    """Numerical failure; `details` is written to the diagnostic file."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = details or {}


# --- validation ---

class ModelConfigError(LabValidationError):
    pass


class GridError(LabValidationError):
    pass


class LayoutError(LabValidationError):
    pass


class DegenerateTraceError(LabValidationError):
    pass


class CarlemanPreconditionError(LabValidationError):
    pass


class ReportInputError(LabValidationError):
    pass


# --- numerical ---

class GeneratorInvariantError(LabNumericalError):
    pass


class FactorizationError(LabNumericalError):
    pass


class SpectralError(LabNumericalError):
    pass


class WeightConstructionError(LabNumericalError):
    pass


class CertificationError(LabNumericalError):
    pass
