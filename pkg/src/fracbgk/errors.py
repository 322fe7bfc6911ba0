"""Exception hierarchy.

Two families matter for the CLI exit codes: bad input / configuration
(`ValidationError`, exit code 2) and failures detected inside a numerical
procedure (`NumericalError`, exit code 3).
"""

from __future__ import annotations


class FracBGKError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(FracBGKError):
    """Invalid configuration, parameters, or ill-prepared data."""

    exit_code = 2


class NumericalError(FracBGKError):
    """A numerical procedure failed or detected an inconsistency."""

    exit_code = 3


class RegimeViolation(ValidationError):
    """A parameter inequality of the admissible regimes is violated."""

    def __init__(self, condition: str, message: str = ""):
        self.condition = condition
        super().__init__(message or f"parameter regime violated: {condition}")


class UnsupportedCombination(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


class IllPrepared(ValidationError):
    pass


class NotDivergenceFree(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnknownKey(ValidationError):
    def __init__(self, name: str, message: str = ""):
        self.name = name
        super().__init__(message or f"unknown configuration key: {name!r}")


class NonFiniteIntegrand(NumericalError):
    pass


class SingularCalibration(NumericalError):
    pass


class CalibrationInfeasible(NumericalError):
    """The calibrated equilibrium would violate positivity."""


class SingularA(NumericalError):
    pass


class ReducedSystemSingular(NumericalError):
    pass


class EigSolveFailure(NumericalError):
    pass


class BranchAmbiguous(NumericalError):
    pass


class MomentDiverged(NumericalError):
    def __init__(self, name: str, coarse: float, fine: float):
        self.name = name
        self.coarse = coarse
        self.fine = fine
        super().__init__(
            f"moment {name} is not grid-stable: {coarse:.6e} -> {fine:.6e} under refinement"
        )


class QuadratureDiverged(NumericalError):
    pass


class WeightUnderflow(NumericalError):
    pass


class BoundViolation(NumericalError):
    """An a priori inequality failed; carries the bound name and margin."""

    def __init__(self, bound: str, time: float, margin: float):
        self.bound = bound
        self.time = time
        self.margin = margin
        super().__init__(
            f"bound {bound!r} violated at t={time:.6g} (relative margin {margin:.3e})"
        )
