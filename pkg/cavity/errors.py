# cavity/errors.py
from typing import Optional, Tuple


class CavityError(Exception):
    """Base error; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(CavityError):
    exit_code = 2


class BudgetExceeded(CavityError):
    exit_code = 3

    def __init__(self, what: str, size: float, cap: float):
        super().__init__(f"{what}: size {size:g} exceeds cap {cap:g}")
        self.what = what
        self.size = size
        self.cap = cap


class NumericalFailure(CavityError):
    exit_code = 4


class PhaseBoundary(CavityError):
    """Raised when a single-phase answer is requested exactly on h̃ = h̃_c."""

    exit_code = 4


class InfeasibleConstraints(ValueError):
    def __init__(self, message: str, attainable: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.attainable = attainable
