"""
Exception types for the PUAL toolkit.
Each family carries the exit code the command-line tool reports for it.
"""


class PUALError(Exception):
    """Base class for all toolkit errors"""
    exit_code = 2


# Validation errors (exit 1)

class ValidationError(PUALError):
    exit_code = 1


class InvalidHyperparameter(ValidationError):
    pass


class NonPositiveSigma(ValidationError):
    pass


class NonPositiveC(ValidationError):
    pass


class NonPositiveWidth(ValidationError):
    pass


# Data errors (exit 2)

class DataError(PUALError):
    exit_code = 2


class EmptyDataset(DataError):
    pass


class InvalidLabel(DataError):
    pass


class NonNumericFeature(DataError):
    pass


class RaggedRow(DataError):
    pass


class InvalidEncoding(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NoLabeledPositives(DataError):
    pass


class NoUnlabeled(DataError):
    pass


class TooFewInstances(DataError):
    pass


class ProblemTooLarge(DataError):
    pass


class InsufficientRank(DataError):
    pass


class EmptyPool(DataError):
    pass


class EmptyLabeledSet(DataError):
    pass


class FoldWithoutLabeledPositive(DataError):
    pass


class UnsupportedForPrecomputed(DataError):
    pass


class ModelFormatError(DataError):
    pass


# Numerical failures (exit 3)

class NumericalError(PUALError):
    exit_code = 3


class SingularSystem(NumericalError):
    pass


class SingularB(NumericalError):
    pass


class DegenerateM22(NumericalError):
    pass
