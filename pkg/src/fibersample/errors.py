"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` (CLI exit code 1);
numerical failures derive from :class:`NumericalError` (CLI exit code 2).
"""


class FiberSampleError(Exception):
    pass


class ValidationError(FiberSampleError, ValueError):
    pass


class NumericalError(FiberSampleError, ArithmeticError):
    pass


class EmptyMatrix(ValidationError):
    pass


class ZeroRowOrColumn(ValidationError):
    pass


class OnesNotInRowspan(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonIntegralDegree(ValidationError):
    pass


class NotInFiber(ValidationError):
    pass


class EmptyFiber(ValidationError):
    pass


class FiberTooLarge(ValidationError):
    pass


class MarginalMismatch(ValidationError):
    pass


class ZeroTotal(ValidationError):
    pass


class InconsistentMarginals(ValidationError):
    pass


class ZeroSeparatorWithPositiveClique(ValidationError):
    pass


class ZeroDenominator(ValidationError):
    pass


class NegativeEntryInA(ValidationError):
    pass


class IncompatibleEstimator(ValidationError):
    pass


class InvalidB(ValidationError):
    pass


class InconsistentPath(ValidationError):
    pass


class InvalidMove(ValidationError):
    pass


class NoBasisAvailable(ValidationError):
    pass


class UnknownPreset(ValidationError):
    pass


class ModelMismatch(ValidationError):
    pass


class NonPositiveExpected(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class ConstantSequence(ValidationError):
    pass


class NotConverged(NumericalError):
    pass


class EstimatorFailed(NumericalError):
    pass


class DegenerateState(NumericalError):
    pass


class RetriesExhausted(NumericalError):
    pass
