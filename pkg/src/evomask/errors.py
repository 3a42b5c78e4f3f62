"""Exception hierarchy.

``FormatError`` covers unreadable or malformed inputs (CLI exit code 2);
``ValidationError`` covers well-formed inputs that violate an operation's
preconditions (CLI exit code 3).
"""


class EvoMaskError(Exception):
    pass


class FormatError(EvoMaskError):
    pass


class ValidationError(EvoMaskError, ValueError):
    pass


class MalformedHeader(FormatError):
    pass


class DimensionMismatch(FormatError):
    pass


class InvalidValue(FormatError):
    pass


class RangeOutOfBounds(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class EmptyMatrix(ValidationError):
    pass


class AncestorPair(ValidationError):
    pass


class EpochOutOfRange(ValidationError):
    pass


class DepthOutOfRange(ValidationError):
    pass


class LeafCountMismatch(ValidationError):
    pass


class RatioOutOfRange(ValidationError):
    pass


class UnsupportedRatio(ValidationError):
    pass


class GridTooSmall(ValidationError):
    pass


class ZeroRow(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class TooManySegments(ValidationError):
    pass
