"""Stationary Stokes solver for the rigid-skeleton model.

Three-step scheme per time level: (1) intermediate velocity from the
viscous balance with gravity and no pressure, (2) artificial-compressibility
pressure iteration, (3) final velocity from the pressure-corrected balance.
Steps 2 and 3 are fused into one loop: every pressure update is followed by
a velocity re-relaxation, and the artificial sound speed grows until the
divergence residual meets its tolerance.

Gravity points along +x2; the density enters only the v-component, averaged
onto faces.  Viscosity may vary per cell (two-phase runs); the momentum
coefficient is mu1 * eps^2 * mu(x).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import SolverError
from .geometry import CellMask
from .grid import CENTER, Field, StaggeredGrid
from .operators import cell_to_vface, fill_u_noslip, fill_v_noslip
from .relaxation import ACControls, MaskedStokesEngine, RelaxationError, SolveReport


@dataclass(frozen=True)
class StokesParams:
    """Physical coefficient and iteration controls of the rigid solve."""

    mu1: float = 1.0          # viscosity scale (the mu_1 of the mu_1 eps^2 coefficient)
    eps: float = 1.0          # dimensionless pore size entering the coefficient
    c_p: float = 1.0          # initial artificial sound speed
    c_p_growth: float = 1.5
    c_p_max: float = 1e6
    div_tol: float = 1e-6
    relax_tol: float = 1e-8
    max_iters: int = 100_000  # inner relaxation budget per velocity solve
    max_outer: int = 20_000
    omega: float = 1.0

    def __post_init__(self):
        if self.mu1 <= 0 or self.eps <= 0:
            raise ValueError("mu1 and eps must be positive")
        if self.c_p <= 0 or self.c_p_growth < 1 or self.div_tol <= 0:
            raise ValueError("invalid artificial-compressibility controls")

    def controls(self) -> ACControls:
        return ACControls(
            c_init=self.c_p, growth=self.c_p_growth, c_max=self.c_p_max,
            div_tol=self.div_tol, relax_tol=self.relax_tol,
            max_inner=self.max_iters, max_outer=self.max_outer, omega=self.omega,
        )


@dataclass(frozen=True)
class StokesDiagnostics:
    div_residual: float
    outer_sweeps: int
    inner_sweeps: int
    c_p_final: float
    converged: bool
    warnings: tuple[str, ...] = ()


def _center_values(x, grid: StaggeredGrid, name: str) -> np.ndarray:
    if isinstance(x, Field):
        if x.loc != CENTER:
            raise ValueError(f"{name} must be a center field")
        x = x.data
    x = np.asarray(x, dtype=float)
    if x.shape != (grid.nx, grid.ny):
        raise ValueError(f"{name} must have shape {(grid.nx, grid.ny)}, got {x.shape}")
    return x


def kappa_cells(mask: CellMask, params: StokesParams, mu, grid: StaggeredGrid) -> np.ndarray:
    """Per-cell momentum coefficient mu1 * eps^2 * mu(x)."""
    base = params.mu1 * params.eps**2
    if mu is None:
        return np.full((grid.nx, grid.ny), base)
    return base * _center_values(mu, grid, "mu")


def fluid_engine(grid: StaggeredGrid, mask: CellMask, kappa: np.ndarray) -> MaskedStokesEngine:
    t = mask.tables

    def fill_bc(u, v, p):
        fill_u_noslip(u, t, -1.0)
        fill_v_noslip(v, t, -1.0)

    kmax = float(kappa[mask.chi].max()) if mask.n_fluid_cells else 1.0
    weight = np.clip(kappa / kmax, 1e-12, None)
    return MaskedStokesEngine(
        grid, kappa, mask.chi, t.u_fluid, t.v_fluid, fill_bc, p_weight=weight
    )


def gravity_body(rho: np.ndarray, grid: StaggeredGrid) -> tuple[np.ndarray, np.ndarray]:
    """Body force (0, rho) at faces; rho face values are arithmetic averages."""
    return np.zeros(grid.inner_shape("u")), cell_to_vface(rho, grid)


def intermediate_velocity(
    rho,
    mask: CellMask,
    params: StokesParams,
    *,
    grid: StaggeredGrid | None = None,
    mu=None,
    v_init: tuple[Field, Field] | None = None,
) -> tuple[Field, Field]:
    """Solve mu1 eps^2 lap(v~) = -rho e2 on fluid faces with no-slip walls."""
    grid = grid or StaggeredGrid(mask.nx, mask.ny)
    rho = _center_values(rho, grid, "rho")
    engine = fluid_engine(grid, mask, kappa_cells(mask, params, mu, grid))
    if v_init is None:
        u, v = grid.u_field(), grid.v_field()
    else:
        u, v = v_init[0].copy(), v_init[1].copy()
    body_u, body_v = gravity_body(rho, grid)
    sweeps, res, ok = engine.relax_velocity(
        u.data, v.data, None, body_u, body_v, params.relax_tol, params.max_iters, params.omega
    )
    if not ok:
        raise RelaxationError(
            f"intermediate velocity stalled after {sweeps} sweeps", residual=res
        )
    return u, v


def pressure_velocity_iteration(
    v_tilde: tuple[Field, Field],
    rho,
    mask: CellMask,
    params: StokesParams,
    p_init: Field | None = None,
    *,
    grid: StaggeredGrid | None = None,
    mu=None,
) -> tuple[Field, tuple[Field, Field], float]:
    """Artificial-compressibility loop; returns (p, v, divergence residual).

    p is gauged to zero mean over fluid cells.  The underlying report is
    attached to the returned pressure field as `report`.
    """
    grid = grid or StaggeredGrid(mask.nx, mask.ny)
    rho = _center_values(rho, grid, "rho")
    engine = fluid_engine(grid, mask, kappa_cells(mask, params, mu, grid))
    u, v = v_tilde[0].copy(), v_tilde[1].copy()
    p = grid.center_field() if p_init is None else p_init.copy()
    fl = mask.chi
    if mask.n_fluid_cells:
        p.data[fl] -= p.data[fl].mean()
    body_u, body_v = gravity_body(rho, grid)
    report = engine.ac_solve(u.data, v.data, p.data, body_u, body_v, params.controls(), gauge=True)
    if mask.n_fluid_cells:
        p.data[fl] -= p.data[fl].mean()
    p.report = report
    return p, (u, v), report.div_residual


def stationary_stokes_solve(
    rho,
    mask: CellMask,
    params: StokesParams,
    p_init: Field | None = None,
    *,
    grid: StaggeredGrid | None = None,
    mu=None,
    v_init: tuple[Field, Field] | None = None,
    strict: bool = True,
) -> tuple[tuple[Field, Field], Field, StokesDiagnostics]:
    """Full stationary Stokes solve (Steps 1-3); raises SolverError if the
    divergence residual cannot be brought below div_tol."""
    grid = grid or StaggeredGrid(mask.nx, mask.ny)
    v_t = intermediate_velocity(rho, mask, params, grid=grid, mu=mu, v_init=v_init)
    p, vel, res = pressure_velocity_iteration(
        v_t, rho, mask, params, p_init, grid=grid, mu=mu
    )
    report: SolveReport = p.report
    diag = StokesDiagnostics(
        div_residual=report.div_residual,
        outer_sweeps=report.outer_sweeps,
        inner_sweeps=report.inner_sweeps,
        c_p_final=report.c_final,
        converged=report.converged,
        warnings=report.warnings,
    )
    if strict and not report.converged:
        raise SolverError(
            f"stationary Stokes solve did not reach div tolerance "
            f"{params.div_tol:g} (residual {res:.3e})",
            residual=res,
        )
    return vel, p, diag


class RigidSolver:
    """Stateful wrapper holding warm-start fields across time steps.

    A solver instance owns its scratch fields and must not be shared
    mid-solve; distinct instances are independent.
    """

    def __init__(self, mask: CellMask, params: StokesParams, grid: StaggeredGrid | None = None):
        self.mask = mask
        self.params = params
        self.grid = grid or StaggeredGrid(mask.nx, mask.ny)
        self.u = self.grid.u_field()
        self.v = self.grid.v_field()
        self.p = self.grid.center_field()
        self.u_tilde = self.grid.u_field()
        self.v_tilde = self.grid.v_field()
        self.last_diagnostics: StokesDiagnostics | None = None

    def solve(self, rho, mu=None) -> tuple[Field, Field]:
        """Update the velocity/pressure state for the given density field."""
        v_t = intermediate_velocity(
            rho, self.mask, self.params, grid=self.grid, mu=mu,
            v_init=(self.u_tilde, self.v_tilde),
        )
        self.u_tilde, self.v_tilde = v_t
        # Seed the corrected velocity with the previous level's, not v~:
        # near steady state it is the better warm start.
        u, v = self.u.copy(), self.v.copy()
        if self.last_diagnostics is None:
            u, v = v_t[0].copy(), v_t[1].copy()
        p, (u, v), _ = pressure_velocity_iteration(
            (u, v), rho, self.mask, self.params, self.p, grid=self.grid, mu=mu
        )
        report = p.report
        self.u, self.v, self.p = u, v, p
        self.last_diagnostics = StokesDiagnostics(
            div_residual=report.div_residual,
            outer_sweeps=report.outer_sweeps,
            inner_sweeps=report.inner_sweeps,
            c_p_final=report.c_final,
            converged=report.converged,
            warnings=report.warnings,
        )
        if not report.converged:
            raise SolverError(
                f"rigid solve did not converge (residual {report.div_residual:.3e})",
                residual=report.div_residual,
            )
        return self.u, self.v
