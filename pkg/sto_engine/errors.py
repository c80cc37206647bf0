"""
Exception hierarchy for the STO engine.
Each class maps to one CLI exit-code class (see services.runner.EXIT_CODES).
"""


class StoError(Exception):
    """Root of all engine errors."""


class ParameterError(StoError, ValueError):
    """Invalid argument: bad order, empty list, grid mismatch, out-of-range coordinate."""


class DomainError(StoError, ValueError):
    """Input outside the mathematical domain of an operation."""


class NumericError(StoError, ArithmeticError):
    """A numerical procedure failed to deliver its guarantee."""


class NonExpandingFiberError(NumericError):
    """A realized fiber map has minimal slope <= 1 in strict mode."""

    def __init__(self, fiber, min_slope):
        self.fiber = fiber
        self.min_slope = min_slope
        super().__init__(
            f"fiber {fiber} is not expanding (min slope {min_slope:.6g} <= 1)"
        )


class FitError(NumericError):
    """Exponential-rate fit preconditions violated."""


class ConfigError(ParameterError):
    """Configuration problem with a machine-readable code and optional line number."""

    CODES = (
        "missing_file",
        "parse_error",
        "unknown_key",
        "type_mismatch",
        "unresolvable_name",
        "invalid_value",
    )

    def __init__(self, code, message, line=None):
        if code not in self.CODES:
            raise ValueError(f"unknown config error code: {code}")
        self.code = code
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"[{code}] {message}{where}")


class ProbeError(StoError):
    """A probe cannot be evaluated on the given inputs."""


class ReportError(StoError):
    """Report assembly failed (duplicate or missing probe)."""
