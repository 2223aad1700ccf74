"""Exception types raised across the package."""


class StiefelReluError(Exception):
    """Base class for every error raised by this package."""


class InvalidDim(StiefelReluError, ValueError):
    pass


class RankDeficient(StiefelReluError, ArithmeticError):
    pass


class ZeroDiagonal(StiefelReluError, ArithmeticError):
    pass


class InvalidKind(StiefelReluError, ValueError):
    pass


class NonpositiveSigma(StiefelReluError, ValueError):
    pass


class UnsupportedDistribution(StiefelReluError, ValueError):
    pass


class ShapeMismatch(StiefelReluError, ValueError):
    pass


class DivergedLoss(StiefelReluError, FloatingPointError):
    pass


# data ingestion

class BadMagic(StiefelReluError, ValueError):
    pass


class LengthMismatch(StiefelReluError, ValueError):
    pass


class InsufficientClassSamples(StiefelReluError, ValueError):
    pass


class ParseError(StiefelReluError, ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumn(StiefelReluError, KeyError):
    pass


class NonMonotoneWidths(UserWarning):
    """Widths increase somewhere; the mean-field recursion assumes they do not."""


class DegenerateFeature(UserWarning):
    """A constant feature column was dropped during standardization."""
