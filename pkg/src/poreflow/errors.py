"""Exception types shared across the solvers and the harness."""

from __future__ import annotations


class SolverError(RuntimeError):
    """A solve failed to meet its contract (non-convergence, instability)."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class CflError(SolverError):
    """A transport step was requested with a dt violating the CFL bound."""

    def __init__(self, message: str, required_dt: float):
        super().__init__(message)
        self.required_dt = required_dt


class CouplingError(SolverError):
    """The fluid/skeleton fixed-point iteration did not converge."""

    def __init__(self, message: str, residual_history: tuple[float, ...]):
        super().__init__(message)
        self.residual_history = residual_history
