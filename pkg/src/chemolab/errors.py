"""Exception hierarchy shared by every module."""


class ChemolabError(Exception):
    """Base class for all package errors."""


class DomainError(ChemolabError, ValueError):
    """An argument lies outside the domain of an operation."""


class ThresholdError(DomainError):
    """A growth-rate threshold required by an operation is not met."""


class ShapeError(ChemolabError, ValueError):
    """A field does not match the grid it is used with."""


class NumericError(ChemolabError, ArithmeticError):
    """Non-finite values, or a positivity/identity invariant broke."""


class StiffnessError(NumericError):
    """Adaptive step size fell below the underflow guard."""


class SolverError(ChemolabError):
    """A PDE step could not be completed."""

    partial = None


class CFLError(SolverError):
    def __init__(self, message, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class StepNumericError(SolverError, NumericError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class RunTimeout(SolverError):
    """Wall-clock guard tripped; ``partial`` holds the samples produced so far."""


class InconclusiveError(ChemolabError):
    """Verification data is insufficient or non-monotone."""


class ConfigError(ChemolabError, ValueError):
    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key
