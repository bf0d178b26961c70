"""Exception hierarchy shared across the package."""


class ReconError(Exception):
    """Base class for all package errors."""


class DataError(ReconError):
    """Input data violates a precondition (CLI exit code 2)."""


class NumericError(ReconError):
    """A numerical failure during computation (CLI exit code 3)."""


class SignalTooShort(DataError):
    pass


class SignalEmpty(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class IoFailure(DataError):
    pass


class NonHermitianInput(DataError):
    pass


class EmptyBatch(DataError):
    pass


class GraphNotRecorded(ReconError):
    pass


class DegenerateWindowSum(NumericError):
    pass


class NonFiniteActivation(NumericError):
    pass


class NonFiniteLoss(NumericError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
