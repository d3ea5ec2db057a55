"""Exception hierarchy.

Every error raised on purpose by this package derives from ``MBalanceError``.
``ValidationError`` subclasses signal bad input; ``NumericalError``
subclasses signal that a numerical routine could not produce an answer. The
CLI maps the two families to different exit codes.
"""


class MBalanceError(Exception):
    pass


class ValidationError(MBalanceError):
    pass


class NumericalError(MBalanceError):
    pass


class MissingColumn(ValidationError):
    pass


class NonBinaryTreatment(ValidationError):
    pass


class NonNumericValue(ValidationError):
    def __init__(self, row, col, value=None):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"non-numeric value {value!r} at row {row}, column {col!r}")


class EmptyGroup(ValidationError):
    pass


class GroupTooSmall(ValidationError):
    pass


class MissingOutcome(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class WeightSumViolation(ValidationError):
    pass


class EmptyVector(ValidationError):
    pass


class UnknownScenario(ValidationError):
    pass


class BandwidthUnresolvable(NumericalError):
    pass


class ZeroDispersion(NumericalError):
    def __init__(self, k):
        self.k = k
        super().__init__(f"feature {k} has zero variance in both groups but unequal means")


class FactorizationFailed(NumericalError):
    pass


class NumericalFailure(NumericalError):
    pass


class LineSearchFailed(NumericalError):
    pass


class Infeasible(NumericalError):
    pass


class AllSolvesFailed(NumericalError):
    pass


class TooManyFailedReplicates(NumericalError):
    pass
