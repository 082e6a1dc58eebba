"""Exception hierarchy shared by the library and the CLI.

Every error carries a machine-readable ``code`` and the process ``exit_code``
the CLI maps it to (2 = configuration, 3 = numerical failure).
"""

from typing import Any, Dict, Optional


class QuantizerError(Exception):
    """Base class for all optiquant failures."""

    code = "error"
    exit_code = 3

    def __init__(self, message: str, *, code: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.details: Dict[str, Any] = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": str(self), "details": self.details}


class ConfigurationError(QuantizerError):
    code = "config_error"
    exit_code = 2


class UnsupportedBackendError(QuantizerError):
    code = "unsupported_backend"
    exit_code = 2


class PreconditionError(QuantizerError):
    code = "precondition_failed"
    exit_code = 2


class DomainError(QuantizerError):
    code = "domain_error"


class InvariantViolation(QuantizerError):
    code = "invariant_violation"


class MergeError(QuantizerError):
    code = "merge"


class SeedingError(QuantizerError):
    code = "seeding"


class InfeasibleRadiusError(QuantizerError):
    code = "radius_infeasible"


class QuadratureDivergenceError(QuantizerError):
    code = "quadrature_divergence"


__all__ = [
    "QuantizerError",
    "ConfigurationError",
    "UnsupportedBackendError",
    "PreconditionError",
    "DomainError",
    "InvariantViolation",
    "MergeError",
    "SeedingError",
    "InfeasibleRadiusError",
    "QuadratureDivergenceError",
]
