"""Exception hierarchy shared by every module.

Each error carries a stable ``code`` that the CLI reports in its JSON error
line, so scripts can branch on it without parsing messages.
"""


class CvxsynthError(Exception):
    code = "Error"

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"code": self.code, "message": str(self)}
        out.update({k: v for k, v in self.details.items() if v is not None})
        return out


class SchemaError(CvxsynthError):
    code = "SchemaError"


class SchemaNotFound(CvxsynthError):
    code = "SchemaNotFound"


class MissingColumn(CvxsynthError):
    code = "MissingColumn"


class UnknownCategory(CvxsynthError):
    code = "UnknownCategory"

    def __init__(self, feature, value):
        super().__init__(f"value {value!r} is not a declared category of {feature!r}",
                         feature=feature, value=value)


class MissingValue(CvxsynthError):
    code = "MissingValue"

    def __init__(self, row, feature):
        super().__init__(f"row {row}: empty cell for {feature!r}", row=row, feature=feature)


class ParseError(CvxsynthError):
    code = "ParseError"


class NonSnappedCategorical(CvxsynthError):
    code = "NonSnappedCategorical"


class ClassTooSmall(CvxsynthError):
    code = "ClassTooSmall"


class KTooLarge(CvxsynthError):
    code = "KTooLarge"


class EmbeddingShapeMismatch(CvxsynthError):
    code = "EmbeddingShapeMismatch"


class ComplementTooSmall(CvxsynthError):
    code = "ComplementTooSmall"


class TapeEmpty(CvxsynthError):
    code = "TapeEmpty"


class NonFiniteLoss(CvxsynthError):
    code = "NonFiniteLoss"


class VersionMismatch(CvxsynthError):
    code = "VersionMismatch"


class ChecksumError(CvxsynthError):
    code = "ChecksumError"


class CardinalityUnmatchable(CvxsynthError):
    code = "CardinalityUnmatchable"

    def __init__(self, cls, have, need):
        super().__init__(
            f"could not sample synthetic data to match the cardinality of class {cls!r}: "
            f"{have} synthetic rows, {need} required",
            cls=cls, have=have, need=need,
        )


class NoContinuousFeatures(CvxsynthError):
    code = "NoContinuousFeatures"


class NoCategoricalFeatures(CvxsynthError):
    code = "NoCategoricalFeatures"


class TargetClassMissing(CvxsynthError):
    code = "TargetClassMissing"


class EmptyTable(CvxsynthError):
    code = "EmptyTable"


class NoQuasiIdentifiers(CvxsynthError):
    code = "NoQuasiIdentifiers"
