"""Exception hierarchy shared by every geo_opt module."""


class GeoError(Exception):
    """Base class for all geo_opt errors."""


class InvalidArgument(GeoError, ValueError):
    pass


class InvalidData(GeoError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"{message} (row {row})")
        self.row = row


class OutOfSupportError(GeoError, ArithmeticError):
    """A data row has exactly zero probability under the model."""

    def __init__(self, row):
        super().__init__(f"row {row!r} has zero probability under the model")
        self.row = row


class InvalidCandidate(GeoError, ValueError):
    pass


class NumericalFailure(GeoError, ArithmeticError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class EmptyFrontierError(GeoError):
    pass


class BudgetExhausted(GeoError):
    pass


class ConfigError(GeoError, ValueError):
    pass


class ResumeError(GeoError):
    def __init__(self, cell, reason):
        super().__init__(f"cannot resume cell {cell!r}: {reason}")
        self.cell = cell
