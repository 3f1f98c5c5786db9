"""Shared relaxation / artificial-compressibility engine.

Both skeleton models reduce to the same algebra: a component-wise
variable-coefficient vector Laplace problem on a set of active faces,
coupled to an incompressibility constraint enforced by pseudo-time
pressure iteration (dp/dtau = -c^2 div v) with a growing artificial sound
speed c.  The engine is agnostic about which phase it solves; callers
supply the active masks, the coefficient field, and a ghost-fill callback
that encodes the boundary treatment.

Relaxation is damped point-Jacobi with a fixed (whole-array) update order,
which keeps results bitwise independent of any internal data-parallel
split and preserves mirror symmetry of symmetric problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import U_FACE, V_FACE, StaggeredGrid
from .operators import link_coefficients

_TINY = 1e-300


class RelaxationError(RuntimeError):
    """Inner relaxation failed to reach its tolerance within the budget."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ACControls:
    """Knobs of the artificial-compressibility outer loop."""

    c_init: float = 1.0
    growth: float = 1.5
    c_max: float = 1e6
    div_tol: float = 1e-6
    relax_tol: float = 1e-8
    max_inner: int = 100_000
    max_outer: int = 20_000
    omega: float = 1.0

    def __post_init__(self):
        if min(self.c_init, self.growth, self.c_max, self.div_tol, self.relax_tol) <= 0:
            raise ValueError("artificial-compressibility controls must be positive")
        if self.growth < 1.0:
            raise ValueError("c_p growth factor must be >= 1")


@dataclass
class SolveReport:
    converged: bool
    div_residual: float
    relax_residual: float
    outer_sweeps: int
    inner_sweeps: int
    c_final: float
    warnings: tuple[str, ...] = ()
    div_history: tuple[float, ...] = ()


class MaskedStokesEngine:
    """Velocity relaxation + pressure iteration on a masked staggered grid.

    Parameters
    ----------
    kappa_cells : per-cell diffusion coefficient (viscosity or Lame modulus).
    region_cells : bool array of cells belonging to the solve region.
    active_u/v : bool arrays of faces that are unknowns.
    fill_bc : callback(u_data, v_data, p) filling every non-active face and
        the ghost rims in place; runs before each residual evaluation.
    p_weight : optional per-cell scaling of the pressure update (local
        pseudo-sound-speed preconditioning for strong viscosity contrast).
    """

    def __init__(
        self,
        grid: StaggeredGrid,
        kappa_cells: np.ndarray,
        region_cells: np.ndarray,
        active_u: np.ndarray,
        active_v: np.ndarray,
        fill_bc,
        p_weight: np.ndarray | None = None,
    ):
        self.grid = grid
        self.fill_bc = fill_bc
        self.active_u = active_u
        self.active_v = active_v
        self.cells = region_cells
        self._mu = active_u.astype(float)
        self._mv = active_v.astype(float)
        self._mc = region_cells.astype(float)
        self._cells_idx = np.nonzero(region_cells)
        self.p_weight = np.ones_like(self._mc) if p_weight is None else p_weight

        h1, h2 = grid.h1, grid.h2
        self._ih1s, self._ih2s = 1.0 / h1**2, 1.0 / h2**2
        self.ku = link_coefficients(kappa_cells, region_cells, grid, U_FACE)
        self.kv = link_coefficients(kappa_cells, region_cells, grid, V_FACE)
        kE, kW, kN, kS = self.ku
        diag_u = (kE + kW) * self._ih1s + (kN + kS) * self._ih2s
        kE, kW, kN, kS = self.kv
        diag_v = (kE + kW) * self._ih1s + (kN + kS) * self._ih2s
        self._inv_diag_u = np.where(active_u, 1.0 / diag_u, 0.0)
        self._inv_diag_v = np.where(active_v, 1.0 / diag_v, 0.0)

    # -- residuals ---------------------------------------------------------
    def _residual_u(self, u: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        kE, kW, kN, kS = self.ku
        ui = u[1:-1, 1:-1]
        lap = (kE * (u[2:, 1:-1] - ui) - kW * (ui - u[:-2, 1:-1])) * self._ih1s \
            + (kN * (u[1:-1, 2:] - ui) - kS * (ui - u[1:-1, :-2])) * self._ih2s
        return (rhs - lap) * self._mu

    def _residual_v(self, v: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        kE, kW, kN, kS = self.kv
        vi = v[1:-1, 1:-1]
        lap = (kE * (v[2:, 1:-1] - vi) - kW * (vi - v[:-2, 1:-1])) * self._ih1s \
            + (kN * (v[1:-1, 2:] - vi) - kS * (vi - v[1:-1, :-2])) * self._ih2s
        return (rhs - lap) * self._mv

    def _rhs(self, p: np.ndarray | None, body_u: np.ndarray, body_v: np.ndarray):
        g = self.grid
        rhs_u = np.zeros(g.inner_shape(U_FACE))
        rhs_v = np.zeros(g.inner_shape(V_FACE))
        if p is not None:
            rhs_u[1:-1, :] = (p[1:, :] - p[:-1, :]) / g.h1
            rhs_v[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / g.h2
        rhs_u -= body_u
        rhs_v -= body_v
        return rhs_u, rhs_v

    def divergence_residual(self, u: np.ndarray, v: np.ndarray):
        g = self.grid
        ui, vi = u[1:-1, 1:-1], v[1:-1, 1:-1]
        div = ((ui[1:, :] - ui[:-1, :]) / g.h1 + (vi[:, 1:] - vi[:, :-1]) / g.h2) * self._mc
        res = float(np.abs(div).max()) if div.size else 0.0
        return div, res

    # -- velocity relaxation -------------------------------------------------
    def relax_velocity(
        self,
        u: np.ndarray,
        v: np.ndarray,
        p: np.ndarray | None,
        body_u: np.ndarray,
        body_v: np.ndarray,
        relax_tol: float,
        budget: int,
        omega: float = 1.0,
    ):
        """Jacobi sweeps until max-norm residual <= relax_tol * ||rhs||_inf.

        Solves kappa-Laplace(u) = grad p - body on the active faces, with
        fill_bc re-imposing wall/ghost values after every sweep.  Returns
        (sweeps, residual, converged).
        """
        rhs_u, rhs_v = self._rhs(p, body_u, body_v)
        scale = max(
            float(np.abs(rhs_u * self._mu).max()) if rhs_u.size else 0.0,
            float(np.abs(rhs_v * self._mv).max()) if rhs_v.size else 0.0,
        )
        self.fill_bc(u, v, p)
        sweeps = 0
        tol = None
        while True:
            ru = self._residual_u(u, rhs_u)
            rv = self._residual_v(v, rhs_v)
            res = max(float(np.abs(ru).max()), float(np.abs(rv).max()))
            if tol is None:
                tol = relax_tol * scale + 1e-15 * res + _TINY
            if res <= tol or sweeps >= budget:
                return sweeps, res, res <= tol
            u[1:-1, 1:-1] -= omega * ru * self._inv_diag_u
            v[1:-1, 1:-1] -= omega * rv * self._inv_diag_v
            self.fill_bc(u, v, p)
            sweeps += 1

    # -- artificial compressibility loop -------------------------------------
    def ac_solve(
        self,
        u: np.ndarray,
        v: np.ndarray,
        p: np.ndarray,
        body_u: np.ndarray,
        body_v: np.ndarray,
        controls: ACControls,
        gauge: bool = True,
    ) -> SolveReport:
        """Iterate pressure update + velocity relaxation until div v meets tol.

        The pseudo-time step is dtau = min(h1,h2)/(2 c); c grows
        geometrically while the divergence residual improves and is backed
        off when it stagnates or explodes (the stability window depends on
        the local coefficient, so unguarded growth would diverge).
        """
        warnings: list[str] = []
        history: list[float] = []
        hmin = min(self.grid.h1, self.grid.h2)
        c = controls.c_init
        om = controls.omega
        idx = self._cells_idx

        inner, rel_res, rel_ok = self.relax_velocity(
            u, v, p, body_u, body_v, controls.relax_tol, controls.max_inner, om
        )
        total_inner = inner
        if not rel_ok:
            warnings.append(f"inner relaxation budget exhausted (residual {rel_res:.3e})")

        best = np.inf
        best_state = None
        since_best = 0
        capped = False
        converged = False
        outer = 0
        for outer in range(1, controls.max_outer + 1):
            div, res = self.divergence_residual(u, v)
            history.append(res)
            if res <= controls.div_tol:
                converged = True
                break
            exploded = (not np.isfinite(res)) or (np.isfinite(best) and res > 10.0 * best)
            if exploded and best_state is not None:
                u[...], v[...], p[...] = (a.copy() for a in best_state)
                c = max(c * 0.2, 1e-12)
                since_best = 0
                warnings.append(f"residual explosion at outer sweep {outer}; state restored, c_p -> {c:.3e}")
                div, res = self.divergence_residual(u, v)
            elif res < best * (1.0 - 1e-3):
                best = res
                best_state = (u.copy(), v.copy(), p.copy())
                since_best = 0
                c_new = min(c * controls.growth, controls.c_max)
                if c_new == controls.c_max and c < controls.c_max and not capped:
                    capped = True
                    warnings.append(f"c_p reached its cap {controls.c_max:g}")
                c = c_new
            else:
                since_best += 1
                if since_best >= 5:
                    c = max(c / controls.growth**2, 1e-12)
                    since_best = 0
            dtau = hmin / (2.0 * c)
            p[idx] -= (dtau * c * c) * (self.p_weight[idx] * div[idx])
            if gauge:
                p[idx] -= p[idx].mean()
            inner, rel_res, _ = self.relax_velocity(
                u, v, p, body_u, body_v, controls.relax_tol, controls.max_inner, om
            )
            total_inner += inner

        div, res = self.divergence_residual(u, v)
        return SolveReport(
            converged=converged and res <= controls.div_tol,
            div_residual=res,
            relax_residual=rel_res,
            outer_sweeps=outer,
            inner_sweeps=total_inner,
            c_final=c,
            warnings=tuple(warnings),
            div_history=tuple(history),
        )
