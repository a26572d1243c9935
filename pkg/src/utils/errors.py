"""
Exception and warning hierarchy for fairness inference.
All errors derive from ValueError so callers that only guard against bad input keep working.
"""


class FairnessInferenceError(ValueError):
    """Base class for every error raised by the package"""


class InvalidDataset(FairnessInferenceError):
    pass


class DegenerateSplit(FairnessInferenceError):
    pass


class InsufficientData(FairnessInferenceError):
    pass


class SingleClassLabels(FairnessInferenceError):
    pass


class NonFiniteFeature(FairnessInferenceError):
    pass


class HoldoutTooSmall(FairnessInferenceError):
    pass


class EmptyGroup(FairnessInferenceError):
    pass


class EmptyPositiveGroup(FairnessInferenceError):
    pass


class PropensityDegenerate(FairnessInferenceError):
    pass


class NonBinaryLabels(FairnessInferenceError):
    pass


class KTooLarge(FairnessInferenceError):
    pass


class UnknownSpec(FairnessInferenceError):
    pass


class InvalidDistribution(FairnessInferenceError):
    pass


class SchemaMismatch(FairnessInferenceError):
    pass


class NonBinaryAfterMapping(FairnessInferenceError):
    pass


class EmptyAfterCleaning(FairnessInferenceError):
    pass


class ConfigError(FairnessInferenceError):
    pass


class FairnessWarning(UserWarning):
    """Base class for recoverable diagnostics"""


class MissingJointCell(FairnessWarning):
    pass


class CalibrationMissing(FairnessWarning):
    pass


class PropensityTruncation(FairnessWarning):
    pass
