"""
Exception hierarchy. Every error carries the exit code the command-line tool
reports for it:

    0 ok, 1 input/parse error, 2 degenerate resonance, 3 leakage,
    4 step guard, 5 invalid basis label, 6 oracle mismatch, 7 window too short
"""
from typing import Optional, Sequence

__all__ = ['EffhamError', 'SpaceMismatch', 'InvalidLeg', 'InvalidLabel', 'ExprError', 'ExprSyntaxError',
           'UnknownIdentifier', 'ExprTypeError', 'DecompositionError', 'ScenarioError', 'DegenerateResonance',
           'LeakageExceeded', 'StepTooLarge', 'NonHermitianGenerator', 'GridMismatch', 'OracleMismatch',
           'WindowTooShort', 'UsageError']


class EffhamError(ValueError):
    exit_code = 1


class SpaceMismatch(EffhamError):
    pass


class InvalidLeg(EffhamError):
    pass


class InvalidLabel(EffhamError):
    exit_code = 5


class ExprError(EffhamError):
    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f'{message} (at offset {offset})'
        super().__init__(message)


class ExprSyntaxError(ExprError):
    pass


class UnknownIdentifier(ExprError):
    pass


class ExprTypeError(ExprError):
    pass


class DecompositionError(EffhamError):
    pass


class ScenarioError(EffhamError):
    pass


class DegenerateResonance(EffhamError):
    exit_code = 2

    def __init__(self, message: str, tuples: Sequence = ()):
        self.tuples = list(tuples)
        super().__init__(message)


class LeakageExceeded(EffhamError):
    exit_code = 3


class StepTooLarge(EffhamError):
    exit_code = 4


class NonHermitianGenerator(EffhamError):
    pass


class GridMismatch(EffhamError):
    pass


class OracleMismatch(EffhamError):
    exit_code = 6


class WindowTooShort(EffhamError):
    exit_code = 7


class UsageError(EffhamError):
    pass
