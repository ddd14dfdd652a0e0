"""Exception hierarchy.

Every error carries a ``category`` used by the command-line front end to pick
an exit code: ``config`` (2), ``data`` (3) or ``numerical`` (4).
"""


class SsvepAlignError(Exception):
    category = "data"


class ConfigError(SsvepAlignError, ValueError):
    category = "config"

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DataError(SsvepAlignError, ValueError):
    category = "data"


class NumericalError(SsvepAlignError, ArithmeticError):
    category = "numerical"


# data
class MissingFile(SsvepAlignError, FileNotFoundError):
    pass


class FormatViolation(DataError):
    pass


class SubjectUnknown(DataError, KeyError):
    pass


class WindowOutOfRange(DataError):
    pass


class UnknownChannel(DataError, KeyError):
    pass


class InsufficientTrials(DataError):
    pass


class CalibTooSmall(ConfigError):
    pass


class InvalidConfig(ConfigError):
    pass


class IoFailure(SsvepAlignError, OSError):
    pass


class InvalidEpochs(DataError):
    pass


# dsp
class FrequencyOutOfRange(ConfigError):
    pass


class InvalidFactor(ConfigError):
    pass


class InvalidBandCount(ConfigError):
    pass


class EdgeAboveNyquist(ConfigError):
    pass


class SampleRateMismatch(DataError):
    pass


class SegmentTooLong(DataError):
    pass


# align
class ShapeMismatch(DataError):
    pass


class NonFiniteInput(NumericalError):
    pass


class StaleCache(SsvepAlignError, RuntimeError):
    pass


class StimulusMismatch(DataError):
    pass


class TargetTooFew(DataError):
    pass


class EmptyTrainSet(DataError):
    pass


class MissingStimulusTransform(DataError, KeyError):
    pass


class ChecksumMismatch(FormatViolation):
    pass


# decode
class TooFewTrials(DataError):
    pass


class SingularCovariance(NumericalError):
    pass


class LengthMismatch(DataError):
    pass


class Empty(DataError):
    pass


# eval
class TooFewPairs(DataError):
    pass


class AllZeroDifferences(DataError):
    pass


class CountExceedsSources(ConfigError):
    pass


class SubjectLoadFailure(DataError):
    pass


class SelectorOutOfRange(ConfigError):
    pass


class FoldLeak(SsvepAlignError, AssertionError):
    """A held-out test trial reached a fitted quantity. Always a bug, never recorded and skipped."""


# warnings
class SingleSourceFallback(UserWarning):
    """Only one source subject: pre-training was skipped."""


class RankDeficient(UserWarning):
    """The LST ridge term dominates at least one direction of the normal equations."""
