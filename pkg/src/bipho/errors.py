from __future__ import annotations

from typing import Optional


class BiphoError(Exception):
    """Base class for every error raised by bipho."""


class InvalidParameterError(BiphoError, ValueError):
    """A precondition of an operation is violated (bad sigma, grid size, ...)."""


class GridMismatchError(BiphoError, ValueError):
    """Two objects that must share a FrequencyGrid do not."""


class SymmetryError(BiphoError, ValueError):
    """An operation needs Λ(Ω) = Λ(−Ω) and got a non-symmetric amplitude."""


class ConfigError(BiphoError, ValueError):
    def __init__(self, message: str, key: str = "", line: Optional[int] = None) -> None:
        self.message = message
        self.key = key
        self.line = line
        where = ""
        if line is not None:
            where = f"line {line}: "
        if key:
            where += f"{key}: "
        super().__init__(f"{where}{message}")


class FitError(BiphoError, RuntimeError):
    """Fit refused or did not converge. Carries the residual report."""

    def __init__(self, reason: str, residual_rms: float = float("nan"), nfev: int = 0) -> None:
        self.reason = reason
        self.residual_rms = residual_rms
        self.nfev = nfev
        super().__init__(f"{reason} (residual_rms={residual_rms:.6g} Hz, nfev={nfev})")
