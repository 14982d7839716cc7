"""Exception hierarchy shared by every module."""


class V2VTrajError(Exception):
    """Base class for all package errors."""


class DataError(V2VTrajError, ValueError):
    """Input data violates a documented schema or invariant."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class MissingColumn(DataError):
    pass


class NonFiniteValue(DataError):
    """A field is non-finite or lies outside its valid domain."""


class NonMonotoneTimestamp(DataError):
    pass


class IndexOutOfRange(V2VTrajError, IndexError):
    pass


class DegenerateInput(DataError):
    pass


class DegenerateRange(DataError):
    pass


class InfeasibleSpec(DataError):
    pass


class InvalidState(DataError):
    pass


class DimensionMismatch(V2VTrajError, ValueError):
    pass


class EmptyDataset(DataError):
    pass


class DivergenceDetected(V2VTrajError, ArithmeticError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


class MissingExogenous(V2VTrajError, ValueError):
    pass


class CorpusTooSmall(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class NoValidWindows(DataError):
    pass


class EmptyInput(DataError):
    pass


class IoFailure(V2VTrajError, OSError):
    pass
