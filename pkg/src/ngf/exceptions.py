"""Exception types raised across the package."""


class NgfError(Exception):
    """Base class for package errors."""


class ContractViolation(NgfError, ValueError):
    """An argument broke a documented pre-condition (shape, length, range)."""


class SingularOperator(NgfError, ArithmeticError):
    """The restricted operator could not be Cholesky-factorized."""


class DenseCapExceeded(NgfError, MemoryError):
    """A dense matrix would exceed the configured size cap."""


class NonPositiveSpectrum(NgfError, ArithmeticError):
    """The restricted operator has an eigenvalue <= 0."""


class ZeroReference(NgfError, ZeroDivisionError):
    """Relative error requested against an all-zero reference."""


class DivergedTraining(NgfError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss in epoch {epoch}")
