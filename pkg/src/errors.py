"""
Exception hierarchy

Every error carries the process exit code the CLI reports for it:
0 success, 1 usage/config error, 2 numerical failure, 3 verification failure.
"""
from typing import Any, Dict, List, Optional

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3
EXIT_INCOMPLETE = 4


class WforgeError(Exception):
    """Base error"""
    exit_code = EXIT_NUMERICAL


class ConfigError(WforgeError):
    """Invalid configuration or usage"""
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, field_errors: Optional[List[str]] = None):
        super().__init__(message)
        self.field_errors = field_errors or []

    def __str__(self) -> str:
        if not self.field_errors:
            return super().__str__()
        lines = [super().__str__()] + [f"  - {e}" for e in self.field_errors]
        return "\n".join(lines)


class InvalidInputError(WforgeError, ValueError):
    """Rejected input to a numerical operation"""
    exit_code = EXIT_CONFIG


class DimensionMismatchError(InvalidInputError):
    """Operands describe different numbers of qubits"""


class InvalidStateError(InvalidInputError):
    """A state vector or density matrix violates its invariants"""


class DegenerateParameterError(InvalidInputError):
    """All-zero raw parameters cannot be constrained"""


class NormalizationError(InvalidInputError):
    """Witnesses are not on the expected normalization"""


class ResourceLimitError(WforgeError):
    """Requested system is larger than the configured limit"""
    exit_code = EXIT_CONFIG


class UnsupportedCatalogError(WforgeError):
    """No permutation data for the requested qubit count"""
    exit_code = EXIT_CONFIG


class ArtifactError(WforgeError):
    """A run artifact is missing or unreadable"""
    exit_code = EXIT_CONFIG


class NumericalError(WforgeError):
    """Numerical failure"""
    exit_code = EXIT_NUMERICAL


class TrainingError(NumericalError):
    """SVM training failed"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class OptimizationError(NumericalError):
    """Every MSO restart diverged"""

    def __init__(self, message: str, traces: Optional[List[Any]] = None):
        super().__init__(message)
        self.traces = traces or []


class VerificationFailed(WforgeError):
    """A witness misclassified test data or failed its certificate"""
    exit_code = EXIT_VERIFICATION

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report
