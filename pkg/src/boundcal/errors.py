"""Exception hierarchy shared by every module.

Each error is a subclass of :class:`BoundcalError` and of the closest builtin
so callers can catch either.
"""


class BoundcalError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(BoundcalError, ValueError):
    pass


class ValueOutOfRange(BoundcalError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NonFiniteValue(BoundcalError, ValueError):
    pass


class QuantileOutOfRange(BoundcalError, ValueError):
    pass


class EmptySample(BoundcalError, ValueError):
    pass


class EmptyMask(BoundcalError, ValueError):
    pass


class EmptyInput(BoundcalError, ValueError):
    pass


class EmptyRiskList(BoundcalError, ValueError):
    pass


class DeltaOutOfRange(BoundcalError, ValueError):
    pass


class NegativeLambda(BoundcalError, ValueError):
    pass


class CannotControlRisk(BoundcalError):
    """No grid value of lambda keeps the upper confidence bound below alpha."""


class TooFewPixels(BoundcalError, ValueError):
    pass


class BadDimension(BoundcalError, ValueError):
    pass


class IndexOutOfRange(BoundcalError, IndexError):
    pass


class EmptyDataset(BoundcalError, ValueError):
    pass


class DivergedLoss(BoundcalError, FloatingPointError):
    pass


# file formats

class BadMagic(BoundcalError, ValueError):
    pass


class UnsupportedDtype(BoundcalError, ValueError):
    pass


class FortranOrderUnsupported(BoundcalError, ValueError):
    pass


class TruncatedPayload(BoundcalError, ValueError):
    pass


class LengthMismatch(BoundcalError, ValueError):
    pass


class VersionMismatch(BoundcalError, ValueError):
    pass


class SizeMismatch(BoundcalError, ValueError):
    pass


class IoFailure(BoundcalError, OSError):
    pass
