"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument or state violates a documented precondition."""


class ShapeError(ContractError):
    """Array dimensions are incompatible with the requested operation."""


class DataError(ValueError):
    """A data file is malformed (missing columns, non-numeric cells, ...)."""


class InsufficientDataError(ContractError):
    """Not enough rows to perform the requested split/window/fit."""


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its iteration budget."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or similar)."""
