"""
Custom exception classes for fracbump.

Every error carries the process exit code the CLI reports for it and a
``details`` dict that ends up in the machine-readable error record.
"""

from typing import Any, Dict, Optional


class FracBumpError(Exception):
    """Base exception class for fracbump."""

    exit_code: int = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = details or {}

    def to_record(self) -> Dict[str, Any]:
        """Machine-readable error record."""
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
            "details": self.details,
        }


class ConfigurationError(FracBumpError):
    """Exception raised for invalid run configuration."""

    exit_code = 2


class AdmissibilityError(ConfigurationError):
    """Exception raised when the potential exponent m lies outside its admissible range."""

    def __init__(self, message: str, inequality: str = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.inequality = inequality
        if inequality:
            self.details.setdefault("inequality", inequality)


class SupercriticalExponentError(ConfigurationError):
    """Exception raised when p is not below the critical exponent."""
    pass


class GridSpecError(ConfigurationError):
    """Exception raised for an unusable grid (odd M, nonpositive L, ...)."""
    pass


class ConvergenceError(FracBumpError):
    """Exception raised when an iterative method does not converge."""

    exit_code = 3

    def __init__(self, message: str, iterations: int = None, residual: float = None,
                 details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.iterations = iterations
        self.residual = residual
        if iterations is not None:
            self.details.setdefault("iterations", iterations)
        if residual is not None:
            self.details.setdefault("residual", residual)


class GroundStateConvergenceError(ConvergenceError):
    """Exception raised when the ground-state iteration stalls."""
    pass


class EigensolverStagnationError(ConvergenceError):
    """Exception raised when the eigensolver leaves unconverged pairs."""
    pass


class KrylovStagnationError(ConvergenceError):
    """Exception raised when a Krylov solve misses its residual target."""
    pass


class ContractionError(ConvergenceError):
    """Exception raised when the fixed-point map fails to contract."""

    def __init__(self, message: str, rate: float = None, **kwargs: Any):
        super().__init__(message, **kwargs)
        self.rate = rate
        if rate is not None:
            self.details.setdefault("rate", rate)


class EndpointMaximizerError(ConvergenceError):
    """Exception raised when the reduced energy peaks at an interval endpoint."""
    pass


class ArtifactIOError(FracBumpError):
    """Exception raised for unreadable or unwritable artifacts."""

    exit_code = 4


class FieldFormatError(ArtifactIOError):
    """Exception raised for a malformed binary field file."""
    pass


class DataValidationError(FracBumpError):
    """Exception raised for data validation errors."""
    pass


class GridMismatchError(DataValidationError):
    """Exception raised when two fields live on different grids."""
    pass


class NonFiniteFieldError(DataValidationError):
    """Exception raised for NaN or infinite samples."""
    pass


class TailFitError(DataValidationError):
    """Exception raised when the tail law does not fit the profile."""
    pass


class SpikePlacementError(DataValidationError):
    """Exception raised when spikes sit too close to the box boundary."""
    pass


class CoefficientError(DataValidationError):
    """Exception raised for a nonpositive expansion coefficient."""
    pass


class DivergentSumError(DataValidationError):
    """Exception raised when an asymptotic constant is requested for l <= 1."""
    pass
