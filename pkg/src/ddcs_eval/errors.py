"""Exception types.

Two families: ``ValidationError`` for bad inputs (the CLI maps these to exit
code 1) and ``ComputationError`` for failures while computing a metric
(exit code 2).
"""


class DdcsEvalError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DdcsEvalError, ValueError):
    pass


class ComputationError(DdcsEvalError, ArithmeticError):
    pass


class MalformedFile(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    def __init__(self, row, col, msg=None):
        self.row = row
        self.col = col
        super().__init__(msg or f"non-finite value at row={row}, col={col}")


class LabelMismatch(ValidationError):
    pass


class LabelOutOfRange(ValidationError):
    pass


class LabelsRequired(ValidationError):
    pass


class IoFailure(DdcsEvalError, OSError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ZeroNormVector(ValidationError):
    pass


class CapExceeded(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class TooFewSamples(ValidationError):
    pass


class KTooLarge(ValidationError):
    pass


class EmptyMetricSet(ValidationError):
    pass


class BatchTooSmall(ValidationError):
    pass


class UsageError(ValidationError):
    pass


class DivisionByZero(ComputationError, ZeroDivisionError):
    pass


class EigenFailure(ComputationError):
    pass
