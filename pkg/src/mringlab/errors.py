"""Exception hierarchy shared by every module."""

from __future__ import annotations


class MatrixLabError(Exception):
    """Base class for all errors raised by mringlab."""


class FieldMismatchError(MatrixLabError, ValueError):
    """Operands belong to different fields."""


class FieldDivisionByZero(MatrixLabError, ZeroDivisionError):
    pass


class SingularMatrixError(MatrixLabError, ValueError):
    pass


class DomainError(MatrixLabError, ValueError):
    """An argument lies outside the operation's domain (rank, u == v, ...)."""


class ResourceLimitError(MatrixLabError):
    """The requested computation exceeds the size or memory budget."""


class UnsupportedError(MatrixLabError, ValueError):
    pass


class NormalityRequiredError(MatrixLabError):
    pass


class ConvergenceError(MatrixLabError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
