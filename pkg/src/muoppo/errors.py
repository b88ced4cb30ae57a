"""Exception types raised across the package."""


class MuoppoError(Exception):
    """Base class for package errors."""


class InvalidPartitionError(MuoppoError, ValueError):
    pass


class InvalidSpecError(MuoppoError, ValueError):
    pass


class CapacityError(MuoppoError, ValueError):
    pass


class ParseError(MuoppoError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DegenerateInputError(MuoppoError, ValueError):
    pass


class ZeroSpectrumError(MuoppoError, ValueError):
    pass


class EmptyBagError(MuoppoError, ValueError):
    pass


class EmptySelectionError(MuoppoError):
    def __init__(self, side, method=""):
        self.side = side
        self.method = method
        super().__init__(f"{method or 'selection'} produced an empty {side} confident set")


class UnstableTailError(MuoppoError):
    """No candidate threshold keeps the component tail above the floor."""


class UnstableInversionError(MuoppoError):
    """Mutual-model inversion denominator too close to zero."""


class SingularTransitionError(MuoppoError, ValueError):
    pass


class EstimationError(MuoppoError):
    """A bag's prior could not be estimated."""

    def __init__(self, bag_id, cause):
        self.bag_id = bag_id
        self.cause = cause
        super().__init__(f"bag {bag_id}: {cause}")
