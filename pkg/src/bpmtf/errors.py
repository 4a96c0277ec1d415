"""Error taxonomy shared across the package.

Every raise site picks the narrowest class that fits. CLI maps
ConfigurationError to exit code 2 and ConvergenceError to exit code 3.
"""


class BpmtfError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BpmtfError):
    """Invalid run configuration or model setup (schema violations, bad shapes)."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DomainError(BpmtfError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(BpmtfError):
    """Numerical breakdown: non-PSD covariance, solver blow-up, iteration cap."""


class CapacityError(BpmtfError):
    """Problem size exceeds a hard enumeration or solver guard."""


class ConvergenceError(BpmtfError):
    """Iterative scheme failed to reach tolerance within its budget."""

    def __init__(self, message: str, scan: int | None = None):
        self.scan = scan
        super().__init__(message if scan is None else f"scan {scan}: {message}")


class DegenerateMeasurementError(BpmtfError):
    """A measurement has zero total explanation weight (no clutter, no intensity)."""


class InvariantViolation(BpmtfError):
    """An internal structural invariant was broken; indicates a bug."""
