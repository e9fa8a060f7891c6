"""
Exception hierarchy shared by every engine module.
Messages are prefixed with the raising module so the CLI can report
module-qualified diagnostics.
"""

from typing import Optional


class XvaError(Exception):
    """Base class for all valuation-engine errors."""

    def __init__(self, module: str, message: str):
        self.module = module
        self.detail = message
        super().__init__(f"{module}: {message}")


class ConfigurationError(XvaError, ValueError):
    """Invalid input data, schedule, curve or run configuration."""

    def __init__(self, module: str, message: str,
                 field: Optional[str] = None,
                 line: Optional[int] = None):
        self.field = field
        self.line = line
        location = ""
        if field is not None:
            location += f" [field {field}]"
        if line is not None:
            location += f" [line {line}]"
        super().__init__(module, message + location)


class HorizonExceededError(ConfigurationError):
    """A time lies beyond the last node of a curve or scenario grid."""


class GridAlignmentError(ConfigurationError):
    """A payment date does not fall on a pricing-grid node."""


class NumericalError(XvaError, ArithmeticError):
    """A numerical procedure failed on otherwise valid input."""


class BootstrapError(NumericalError):
    """Hazard bootstrap root-finding did not converge."""

    def __init__(self, module: str, message: str, segment: int):
        self.segment = segment
        super().__init__(module, f"{message} (segment {segment})")


class ArbitrageError(BootstrapError):
    """A CDS strip implies a negative hazard rate."""


class InfeasibleCorrelationError(NumericalError):
    """Default correlation pushes a joint-default cell outside [0, 1]."""

    def __init__(self, module: str, message: str, cell: str):
        self.cell = cell
        super().__init__(module, f"{message} (cell {cell})")


class StepTooCoarseError(NumericalError):
    """Per-step default probability h*dt exceeds one."""


class RegressionError(NumericalError):
    """Regression cannot be fitted (too few paths for the basis)."""
