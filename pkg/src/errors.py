"""
Error types shared by every module.

ConfigurationError covers bad input (exit code 2 on the command line),
NumericalGuardError covers guards that stop a computation (exit code 3).
"""

from typing import Optional


class MetastabError(Exception):
    """Base class for all lab errors"""

    exit_code = 1


class ConfigurationError(MetastabError, ValueError):
    """Invalid parameters, shapes, names or lattice kinds"""

    exit_code = 2


class NumericalGuardError(MetastabError):
    """A size, count or accuracy guard refused the computation"""

    exit_code = 3


class ConvergenceError(NumericalGuardError):
    """Iterative method stopped before reaching its tolerance"""

    def __init__(self, message: str, residual: Optional[float] = None):
        if residual is not None:
            message = f"{message} (achieved residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual
