"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for I/O and file
format problems, 3 for validation failures, 4 for numeric failures.
"""


class AvsanError(Exception):
    exit_code = 3


class ValidationError(AvsanError, ValueError):
    exit_code = 3


class NumericError(AvsanError, ArithmeticError):
    exit_code = 4


class FileFormatError(AvsanError, IOError):
    exit_code = 2

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DimensionMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class EmptyMap(EmptyInput):
    pass


class EmptyGallery(EmptyInput):
    pass


class TooFewSamples(ValidationError):
    pass


class BatchTooSmall(TooFewSamples):
    pass


class BadArea(ValidationError):
    pass


class BadK(ValidationError):
    pass


class BadTransform(ValidationError):
    pass


class UnknownClass(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class TooShort(ValidationError):
    pass


class PlacementFailure(ValidationError):
    pass


class ZeroNorm(NumericError):
    pass


class NaNInput(NumericError):
    pass


class BadMagic(FileFormatError):
    pass


class BadVersion(FileFormatError):
    pass


class TruncatedFile(FileFormatError):
    pass


class SizeMismatch(FileFormatError):
    pass
