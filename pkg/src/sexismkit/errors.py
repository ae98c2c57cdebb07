"""Exception hierarchy.

Three families map onto the CLI exit codes: configuration problems (2),
data problems (3) and numeric/shape problems (4).
"""


class SexismKitError(Exception):
    exit_code = 1


class ConfigError(SexismKitError):
    exit_code = 2


class ConfigInvalid(ConfigError):
    """Raised with the dotted path of the offending config key."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class DataError(SexismKitError):
    exit_code = 3


class NumericError(SexismKitError):
    exit_code = 4


# corpus
class MissingColumn(DataError):
    pass


class UnknownClass(DataError):
    pass


class DuplicateId(DataError):
    pass


class HierarchyMismatch(DataError):
    pass


class CannotBalance(DataError):
    pass


class DegenerateClass(DataError):
    pass


class EmptyTask(DataError):
    pass


class NoPositives(DataError):
    pass


# features
class EmptyVocabulary(DataError):
    pass


class RaggedDimensions(DataError):
    pass


class ZeroNormVector(DataError):
    pass


class DuplicateKey(DataError):
    pass


class MissingEmbedding(DataError):
    pass


# ensemble
class UnknownModel(DataError):
    pass


class TaskMismatch(DataError):
    pass


class TooManyCandidates(ConfigError):
    pass


# metrics
class LengthMismatch(DataError):
    pass


class UnknownLabel(DataError):
    pass


class EmptyMatrix(DataError):
    pass


# numeric
class DimensionMismatch(NumericError):
    pass


class ZeroNorm(NumericError):
    pass


class ShapeMismatch(NumericError):
    pass


class SpecTaskMismatch(NumericError):
    pass


class WeightCountMismatch(NumericError):
    pass
