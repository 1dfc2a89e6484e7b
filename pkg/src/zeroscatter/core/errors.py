"""
Exception hierarchy shared by every zeroscatter module.

Each class carries the process exit code the CLI uses when the error escapes a
subcommand: 1 for usage and input problems, 2 when a standing dynamical
assumption fails numerically, 3 when a numerical procedure does not converge.
"""

from typing import Any, Optional


class ZeroScatterError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidArgumentError(ZeroScatterError):
    """Malformed input: wrong shapes, bad grids, non-normalized vectors."""


class DomainError(ZeroScatterError):
    """A symbol or special function was evaluated outside its domain."""


class OverflowGuardError(DomainError):
    """Argument beyond the range where log-Gamma evaluation is trusted."""


class OutOfBandError(ZeroScatterError):
    """Frequency content outside the grid's resolved band."""


class UnsupportedFamilyError(ZeroScatterError):
    """The symbol family cannot be used for the requested operation."""


class GeometryError(ZeroScatterError):
    """Cycle windows, sections or sampling circles are badly placed."""


class AssumptionViolationError(ZeroScatterError):
    """A standing hypothesis on the flow fails for this symbol and energy."""

    exit_code = 2


class NonHyperbolicError(AssumptionViolationError):
    """Transverse Floquet multiplier too close to one."""


class NumericalError(ZeroScatterError):
    """A solver broke down; ``residual`` holds what it achieved."""

    exit_code = 3

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class NoConvergenceError(NumericalError):
    """An iteration stopped without meeting its tolerance."""

    def __init__(
        self,
        message: str,
        report: Optional[Any] = None,
        residual: Optional[float] = None,
    ):
        super().__init__(message, residual=residual)
        self.report = report


class DriftError(NumericalError):
    """Energy drift along a trajectory exceeded the abort threshold."""


class StepSizeError(NumericalError):
    """The adaptive integrator could not take a step."""


class BudgetError(NumericalError):
    """A trajectory left the time budget without reaching a sink section."""

    def __init__(self, message: str, point: Optional[Any] = None):
        super().__init__(message)
        self.point = point
