"""Exception types shared across the package."""


class ItomoError(Exception):
    """Base class for all domain errors."""


class InvalidDimensionError(ItomoError):
    pass


class DimensionMismatchError(ItomoError):
    pass


class NotUnitaryError(ItomoError):
    pass


class UndefinedFidelityError(ItomoError):
    pass


class CannotCanonicalizeError(ItomoError):
    pass


class UndefinedVisibilityError(ItomoError):
    pass


class DegenerateSplitterError(ItomoError):
    pass


class ConvergenceFailureError(ItomoError):
    """Iterative scaling did not reach tolerance; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InsufficientDataError(ItomoError):
    pass


class InvalidWindowError(ItomoError):
    pass


class FileFormatError(ItomoError):
    pass
