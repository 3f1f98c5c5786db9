"""Coupled fluid / elastic-skeleton solver (four-step partitioned scheme).

Per time step: (1) Lame solve in the skeleton with the fluid's interface
displacement as Dirichlet data, (2) normal-stress extraction on the pore
walls, (3) Stokes solve in the pores with that traction replacing no-slip
on the walls (plus the mixture-density transport), (4) fluid displacement
update, whose interface trace feeds the next Lame solve.  Steps 1-3 are
iterated with Aitken-relaxed interface data until displacement continuity
holds to coupling_tol.

Wall stresses are carried as tensor components (sigma11, sigma12 on
vertical walls; sigma22, sigma12 on horizontal ones), which makes the
normal-stress continuity condition orientation-free.  Both its sides are
imposed/extracted through one-sided differences consistent with the single
ghost layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CouplingError, SolverError
from .geometry import CellMask, INTERFACE
from .grid import Field, StaggeredGrid
from .operators import cell_to_vface
from .relaxation import ACControls, MaskedStokesEngine, SolveReport
from .rigid import StokesParams, _center_values
from .transport import TransportState, upwind_step


@dataclass(frozen=True)
class ElasticParams:
    """Coefficients and controls of the coupled solve.

    The fluid momentum coefficient is mu0 * mu(x) with mu(x) the advected
    phase viscosity; the skeleton coefficient is lambda0.  block_gain sets
    the pressure response of a solid component to net boundary compression
    (None means lambda0), needed because the partitioned iteration otherwise
    never updates a component's pressure level.
    """

    lambda0: float = 0.5
    mu0: float = 1.0
    rho_s: float = 2.0
    c_ps: float = 1.0
    c_ps_growth: float = 1.5
    c_ps_max: float = 1e6
    c_pf: float = 1.0
    c_pf_growth: float = 1.5
    c_pf_max: float = 1e6
    div_tol: float = 1e-6
    relax_tol: float = 1e-8
    max_iters: int = 100_000
    max_outer: int = 20_000
    omega: float = 1.0
    coupling_tol: float = 1e-5
    k_couple: int = 5
    aitken_init: float = 0.5
    block_gain: float | None = None

    def __post_init__(self):
        if self.lambda0 <= 0 or self.mu0 <= 0 or self.rho_s <= 0:
            raise ValueError("lambda0, mu0 and rho_s must be positive")

    def solid_controls(self) -> ACControls:
        return ACControls(
            c_init=self.c_ps, growth=self.c_ps_growth, c_max=self.c_ps_max,
            div_tol=self.div_tol, relax_tol=self.relax_tol,
            max_inner=self.max_iters, max_outer=self.max_outer, omega=self.omega,
        )

    def fluid_controls(self) -> ACControls:
        return ACControls(
            c_init=self.c_pf, growth=self.c_pf_growth, c_max=self.c_pf_max,
            div_tol=self.div_tol, relax_tol=self.relax_tol,
            max_inner=self.max_iters, max_outer=self.max_outer, omega=self.omega,
        )


@dataclass
class InterfaceTrace:
    """Displacement data on the pore walls.

    n_u / n_v hold wall-normal components at interface faces; t_u / t_v
    hold tangential wall values, stored at the solid-side ghost slots that
    flank each wall (one slot per wall-adjacent face pair).
    """

    n_u: np.ndarray
    n_v: np.ndarray
    t_u: np.ndarray
    t_v: np.ndarray

    @staticmethod
    def zeros(grid: StaggeredGrid) -> "InterfaceTrace":
        return InterfaceTrace(
            np.zeros(grid.inner_shape("u")), np.zeros(grid.inner_shape("v")),
            np.zeros(grid.inner_shape("u")), np.zeros(grid.inner_shape("v")),
        )

    def copy(self) -> "InterfaceTrace":
        return InterfaceTrace(self.n_u.copy(), self.n_v.copy(), self.t_u.copy(), self.t_v.copy())

    def pack(self, t) -> np.ndarray:
        return np.concatenate([
            self.n_u[t.uif_i, t.uif_j],
            self.n_v[t.vif_i, t.vif_j],
            self.t_u[t.ughost_i, t.ughost_j],
            self.t_v[t.vghost_i, t.vghost_j],
        ])

    def unpack_like(self, t, vec: np.ndarray) -> "InterfaceTrace":
        out = self.copy()
        k0 = t.uif_i.size
        k1 = k0 + t.vif_i.size
        k2 = k1 + t.ughost_i.size
        out.n_u[t.uif_i, t.uif_j] = vec[:k0]
        out.n_v[t.vif_i, t.vif_j] = vec[k0:k1]
        out.t_u[t.ughost_i, t.ughost_j] = vec[k1:k2]
        out.t_v[t.vghost_i, t.vghost_j] = vec[k2:]
        return out


@dataclass
class TractionField:
    """Wall stress components extracted from the skeleton (per interface face)."""

    s11_u: np.ndarray   # sigma_11 at vertical-wall (u) interface faces
    s12_u: np.ndarray   # sigma_12 there
    s22_v: np.ndarray   # sigma_22 at horizontal-wall (v) interface faces
    s12_v: np.ndarray   # sigma_12 there

    @staticmethod
    def zeros(grid: StaggeredGrid) -> "TractionField":
        return TractionField(
            np.zeros(grid.inner_shape("u")), np.zeros(grid.inner_shape("u")),
            np.zeros(grid.inner_shape("v")), np.zeros(grid.inner_shape("v")),
        )


@dataclass(frozen=True)
class DirichletBoundary:
    """Outer-boundary displacement data for the Lame solve (tests use nonzero)."""

    u_left: np.ndarray | None = None     # (ny,) normal values at i = 0
    u_right: np.ndarray | None = None
    v_bottom: np.ndarray | None = None   # (nx,) normal values at j = 0
    v_top: np.ndarray | None = None
    u_bottom_wall: np.ndarray | None = None  # (nx+1,) tangential u at y = 0
    u_top_wall: np.ndarray | None = None
    v_left_wall: np.ndarray | None = None    # (ny+1,) tangential v at x = 0
    v_right_wall: np.ndarray | None = None


@dataclass(frozen=True)
class CoupledDiagnostics:
    div_residual_fluid: float
    div_residual_solid: float
    coupling_residual: float
    coupling_sweeps: int
    traction_imbalance: float
    inner_sweeps: int
    outer_sweeps: int
    c_p_final: float
    warnings: tuple[str, ...] = ()


@dataclass
class CoupledState:
    """Full elastic-mode state: displacements, unified pressure, mixture density."""

    grid: StaggeredGrid
    w_f_u: Field
    w_f_v: Field
    w_s_u: Field
    w_s_v: Field
    p: Field
    transport: TransportState
    trace: InterfaceTrace
    vel_u: Field
    vel_v: Field
    traction: TractionField | None = None
    aitken_theta: float = 0.5
    last: CoupledDiagnostics | None = None

    @property
    def t(self) -> float:
        return self.transport.t


def init_coupled_state(mask: CellMask, transport: TransportState, grid: StaggeredGrid | None = None) -> CoupledState:
    grid = grid or StaggeredGrid(mask.nx, mask.ny)
    return CoupledState(
        grid=grid,
        w_f_u=grid.u_field(), w_f_v=grid.v_field(),
        w_s_u=grid.u_field(), w_s_v=grid.v_field(),
        p=grid.center_field(),
        transport=transport,
        trace=InterfaceTrace.zeros(grid),
        vel_u=grid.u_field(), vel_v=grid.v_field(),
    )


# ---------------------------------------------------------------------------
# Lame solve (Step 1)
# ---------------------------------------------------------------------------

def _lame_fill_bc(mask: CellMask, trace: InterfaceTrace, bc: DirichletBoundary):
    t = mask.tables

    def fill(u, v, p):
        ui, vi = u[1:-1, 1:-1], v[1:-1, 1:-1]
        # Non-unknown faces: zero, then impose data.
        ui[~t.u_solid] = 0.0
        vi[~t.v_solid] = 0.0
        ui[t.uif_i, t.uif_j] = trace.n_u[t.uif_i, t.uif_j]
        vi[t.vif_i, t.vif_j] = trace.n_v[t.vif_i, t.vif_j]
        if bc.u_left is not None:
            ui[0, :] = bc.u_left
        if bc.u_right is not None:
            ui[-1, :] = bc.u_right
        if bc.v_bottom is not None:
            vi[:, 0] = bc.v_bottom
        if bc.v_top is not None:
            vi[:, -1] = bc.v_top
        # Tangential ghosts in the pore space: linear through the wall value,
        # which is keyed at the solid-side slot (= the Lame source face).
        g = trace.t_u[t.usghost_i, t.usghost_src_j]
        ui[t.usghost_i, t.usghost_j] = 2.0 * g - ui[t.usghost_i, t.usghost_src_j]
        g = trace.t_v[t.vsghost_src_i, t.vsghost_j]
        vi[t.vsghost_i, t.vsghost_j] = 2.0 * g - vi[t.vsghost_src_i, t.vsghost_j]
        # Outer rims: reflect about the prescribed wall value (default 0).
        gb = 0.0 if bc.u_bottom_wall is None else bc.u_bottom_wall
        gt = 0.0 if bc.u_top_wall is None else bc.u_top_wall
        u[1:-1, 0] = 2.0 * gb - u[1:-1, 1]
        u[1:-1, -1] = 2.0 * gt - u[1:-1, -2]
        gl = 0.0 if bc.v_left_wall is None else bc.v_left_wall
        gr = 0.0 if bc.v_right_wall is None else bc.v_right_wall
        v[0, 1:-1] = 2.0 * gl - v[1, 1:-1]
        v[-1, 1:-1] = 2.0 * gr - v[-2, 1:-1]
        u[0, :] = 0.0
        u[-1, :] = 0.0
        v[:, 0] = 0.0
        v[:, -1] = 0.0

    return fill


def _project_trace_flux(trace: InterfaceTrace, mask: CellMask, grid: StaggeredGrid):
    """Zero the net outward displacement flux of every solid component.

    An incompressible component with Dirichlet data of nonzero net flux has
    no solution; the partitioned iteration produces small imbalances, which
    are removed here (and fed to the component pressure, see solve_lame).
    Returns (projected trace, per-component flux Q).
    """
    t = mask.tables
    ncomp = t.n_solid_components
    q = np.zeros(max(ncomp, 1))
    per = np.zeros(max(ncomp, 1))
    out = trace.copy()
    if ncomp == 0:
        return out, q
    flux_u = t.uif_sign * trace.n_u[t.uif_i, t.uif_j] * grid.h2
    flux_v = t.vif_sign * trace.n_v[t.vif_i, t.vif_j] * grid.h1
    np.add.at(q, t.uif_comp, flux_u)
    np.add.at(q, t.vif_comp, flux_v)
    np.add.at(per, t.uif_comp, grid.h2)
    np.add.at(per, t.vif_comp, grid.h1)
    per = np.maximum(per, 1e-300)
    out.n_u[t.uif_i, t.uif_j] -= t.uif_sign * (q[t.uif_comp] / per[t.uif_comp])
    out.n_v[t.vif_i, t.vif_j] -= t.vif_sign * (q[t.vif_comp] / per[t.vif_comp])
    return out, q


def solve_lame(
    rho_s_field,
    w_dirichlet: InterfaceTrace,
    mask: CellMask,
    params: ElasticParams,
    *,
    grid: StaggeredGrid | None = None,
    p_init: Field | None = None,
    w_init: tuple[Field, Field] | None = None,
    body: tuple[np.ndarray, np.ndarray] | None = None,
    boundary: DirichletBoundary = DirichletBoundary(),
    apply_block_gain: bool = True,
) -> tuple[tuple[Field, Field], Field]:
    """Skeleton displacement solve with interface Dirichlet data.

    Solves lambda0 * lap(w_s) = grad p_s - rho_s e2 on solid faces with
    w_s = data on the pore walls and w_s = 0 on the outer boundary, the
    incompressibility enforced by the artificial-compressibility loop.
    A custom body force replaces gravity for manufactured-solution tests.
    """
    grid = grid or StaggeredGrid(mask.nx, mask.ny)
    rho_s = _center_values(rho_s_field, grid, "rho_s")
    t = mask.tables
    data, q = _project_trace_flux(w_dirichlet, mask, grid)

    if w_init is None:
        u, v = grid.u_field(), grid.v_field()
    else:
        u, v = w_init[0].copy(), w_init[1].copy()
    p = grid.center_field() if p_init is None else p_init.copy()
    if apply_block_gain and t.n_solid_components:
        gain = params.lambda0 if params.block_gain is None else params.block_gain
        areas = t.component_areas * grid.cell_area
        shift = -gain * q / np.maximum(areas, 1e-300)
        solid = ~mask.chi
        p.data[solid] += shift[t.solid_labels[solid] - 1]

    if body is None:
        body_u = np.zeros(grid.inner_shape("u"))
        body_v = cell_to_vface(rho_s, grid)
    else:
        body_u, body_v = body

    kappa = np.full((grid.nx, grid.ny), params.lambda0)
    engine = MaskedStokesEngine(
        grid, kappa, ~mask.chi, t.u_solid, t.v_solid,
        _lame_fill_bc(mask, data, boundary),
    )
    report = engine.ac_solve(
        u.data, v.data, p.data, body_u, body_v, params.solid_controls(), gauge=False
    )
    p.report = report
    if not report.converged:
        raise SolverError(
            f"Lame solve did not reach div tolerance (residual {report.div_residual:.3e})",
            residual=report.div_residual,
        )
    return (u, v), p


# ---------------------------------------------------------------------------
# Traction extraction (Step 2)
# ---------------------------------------------------------------------------

def _one_sided(fa, fb, fc, h, sign):
    """Second-order one-sided derivative at a from values (a, a-s*h, a-2*s*h)."""
    return sign * (3.0 * fa - 4.0 * fb + fc) / (2.0 * h)


def interface_traction(
    w_s: tuple[Field, Field],
    p_s: Field,
    mask: CellMask,
    params: ElasticParams,
    *,
    grid: StaggeredGrid | None = None,
) -> TractionField:
    """Skeleton stress components on every interface face, solid-side one-sided.

    Vertical walls carry (sigma11, sigma12) = (lambda0 d1(w1) - p, lambda0
    (d2(w1) + d1(w2))/2); horizontal walls the transposed pair.  p_s is
    extrapolated from the two adjacent solid cells.
    """
    grid = grid or StaggeredGrid(mask.nx, mask.ny)
    t = mask.tables
    lam = params.lambda0
    h1, h2 = grid.h1, grid.h2
    wu, wv = w_s[0].inner, w_s[1].inner
    wu_g, wv_g = w_s[0].data, w_s[1].data  # with rims, for wall-parallel neighbours
    p = p_s.data
    out = TractionField.zeros(grid)

    if t.uif_i.size:
        i, j, s = t.uif_i, t.uif_j, t.uif_sign.astype(float)
        cs = t.uif_scell_i
        # d1(w1): one-sided into the solid along x1.
        d1w1 = _one_sided(wu[i, j], wu[i - t.uif_sign, j], wu[i - 2 * t.uif_sign, j], h1, s)
        # p at the wall: linear extrapolation from the two solid cells.
        c2 = cs - t.uif_sign
        p_wall = 1.5 * p[cs, j] - 0.5 * p[c2, j]
        # d2(w1): central along the wall using wall-face values (rim-padded).
        d2w1 = (wu_g[i + 1, j + 2] - wu_g[i + 1, j]) / (2.0 * h2)
        # d1(w2): one-sided from wall value g and two solid-side columns.
        col = wv_g[1:-1, 1:-1]  # inner view of w2
        a = 0.5 * (col[cs, j] + col[cs, j + 1])
        b = 0.5 * (col[c2, j] + col[c2, j + 1])
        cf = t.uif_fcell_i
        gcol = 0.5 * (col[cf, j] + col[cf, j + 1])
        g = 0.5 * (a + gcol)
        d1w2 = s * ((8.0 / 3.0) * g - 3.0 * a + (1.0 / 3.0) * b) / h1
        out.s11_u[i, j] = lam * d1w1 - p_wall
        out.s12_u[i, j] = 0.5 * lam * (d2w1 + d1w2)

    if t.vif_i.size:
        i, j, s = t.vif_i, t.vif_j, t.vif_sign.astype(float)
        cs = t.vif_scell_j
        d2w2 = _one_sided(wv[i, j], wv[i, j - t.vif_sign], wv[i, j - 2 * t.vif_sign], h2, s)
        c2 = cs - t.vif_sign
        p_wall = 1.5 * p[i, cs] - 0.5 * p[i, c2]
        d1w2 = (wv_g[i + 2, j + 1] - wv_g[i, j + 1]) / (2.0 * h1)
        row = wu_g[1:-1, 1:-1]
        a = 0.5 * (row[i, cs] + row[i + 1, cs])
        b = 0.5 * (row[i, c2] + row[i + 1, c2])
        cf = t.vif_fcell_j
        grow = 0.5 * (row[i, cf] + row[i + 1, cf])
        g = 0.5 * (a + grow)
        d2w1 = s * ((8.0 / 3.0) * g - 3.0 * a + (1.0 / 3.0) * b) / h2
        out.s22_v[i, j] = lam * d2w2 - p_wall
        out.s12_v[i, j] = 0.5 * lam * (d1w2 + d2w1)

    return out


# ---------------------------------------------------------------------------
# Fluid solve with traction walls (Step 3)
# ---------------------------------------------------------------------------

def _fluid_traction_fill_bc(mask: CellMask, grid: StaggeredGrid, traction: TractionField, kappa: np.ndarray):
    t = mask.tables
    h1, h2 = grid.h1, grid.h2

    uif = (t.uif_i, t.uif_j)
    vif = (t.vif_i, t.vif_j)
    kappa_uwall = kappa[t.uif_fcell_i, t.uif_j]
    kappa_vwall = kappa[t.vif_i, t.vif_fcell_j]
    s_u = t.uif_sign.astype(float)
    s_v = t.vif_sign.astype(float)

    gi, gj, gsj, gwj = t.ughost_i, t.ughost_j, t.ughost_src_j, t.ughost_wall_j
    vgi, vgj, vgsi, vgwi = t.vghost_i, t.vghost_j, t.vghost_src_i, t.vghost_wall_i
    kappa_ug = 0.5 * (kappa[np.maximum(gi - 1, 0), gsj] + kappa[np.minimum(gi, mask.nx - 1), gsj])
    kappa_vg = 0.5 * (kappa[vgsi, np.maximum(vgj - 1, 0)] + kappa[vgsi, np.minimum(vgj, mask.ny - 1)])

    def fill(u, v, p):
        ui, vi = u[1:-1, 1:-1], v[1:-1, 1:-1]
        ui[~t.u_fluid] = 0.0
        vi[~t.v_fluid] = 0.0
        # Normal (Robin) wall values from sigma11/sigma22 continuity.
        if uif[0].size:
            u_in = ui[uif[0] + t.uif_sign, uif[1]]
            p_f = p[t.uif_fcell_i, uif[1]]
            ui[uif] = u_in - s_u * (h1 / kappa_uwall) * (traction.s11_u[uif] + p_f)
        if vif[0].size:
            v_in = vi[vif[0], vif[1] + t.vif_sign]
            p_f = p[vif[0], t.vif_fcell_j]
            vi[vif] = v_in - s_v * (h2 / kappa_vwall) * (traction.s22_v[vif] + p_f)
        # Tangential ghosts from sigma12 continuity.
        if gi.size:
            # horizontal wall at row gwj: d2(u) = 2 s12 / kappa - d1(v_wall)
            s12 = 0.5 * (traction.s12_v[np.maximum(gi - 1, 0), gwj]
                         + traction.s12_v[np.minimum(gi, mask.nx - 1), gwj])
            d1v = (vi[np.minimum(gi, mask.nx - 1), gwj]
                   - vi[np.maximum(gi - 1, 0), gwj]) / h1
            d2u = 2.0 * s12 / kappa_ug - d1v
            ui[gi, gj] = ui[gi, gsj] + (gj - gsj) * h2 * d2u
        if vgi.size:
            s12 = 0.5 * (traction.s12_u[vgwi, np.maximum(vgj - 1, 0)]
                         + traction.s12_u[vgwi, np.minimum(vgj, mask.ny - 1)])
            d2u = (ui[vgwi, np.minimum(vgj, mask.ny - 1)]
                   - ui[vgwi, np.maximum(vgj - 1, 0)]) / h2
            d1v = 2.0 * s12 / kappa_vg - d2u
            vi[vgi, vgj] = vi[vgsi, vgj] + (vgi - vgsi) * h1 * d1v
        # Outer boundary: no-slip.
        ui[0, :] = 0.0
        ui[-1, :] = 0.0
        vi[:, 0] = 0.0
        vi[:, -1] = 0.0
        u[1:-1, 0] = -u[1:-1, 1]
        u[1:-1, -1] = -u[1:-1, -2]
        v[0, 1:-1] = -v[1, 1:-1]
        v[-1, 1:-1] = -v[-2, 1:-1]
        u[0, :] = 0.0
        u[-1, :] = 0.0
        v[:, 0] = 0.0
        v[:, -1] = 0.0

    return fill


def fluid_kappa(mask: CellMask, params: ElasticParams, mu, grid: StaggeredGrid) -> np.ndarray:
    if mu is None:
        return np.full((grid.nx, grid.ny), params.mu0)
    return params.mu0 * _center_values(mu, grid, "mu")


def solve_fluid_with_traction(
    rho,
    traction: TractionField,
    mask: CellMask,
    params: ElasticParams,
    *,
    grid: StaggeredGrid | None = None,
    mu=None,
    p_init: Field | None = None,
    v_init: tuple[Field, Field] | None = None,
) -> tuple[tuple[Field, Field], Field]:
    """Pore-space Stokes solve with traction walls; returns (velocity, p_f).

    No-slip holds on the outer boundary; on the pore walls the one-sided
    fluid stress is forced to match the given wall stress through ghost
    values, which also pins the pressure level (no gauge here).
    """
    grid = grid or StaggeredGrid(mask.nx, mask.ny)
    rho = _center_values(rho, grid, "rho")
    kappa = fluid_kappa(mask, params, mu, grid)
    t = mask.tables
    if v_init is None:
        u, v = grid.u_field(), grid.v_field()
    else:
        u, v = v_init[0].copy(), v_init[1].copy()
    p = grid.center_field() if p_init is None else p_init.copy()
    body_u = np.zeros(grid.inner_shape("u"))
    body_v = cell_to_vface(rho, grid)
    kmax = float(kappa[mask.chi].max()) if mask.n_fluid_cells else 1.0
    engine = MaskedStokesEngine(
        grid, kappa, mask.chi, t.u_fluid, t.v_fluid,
        _fluid_traction_fill_bc(mask, grid, traction, kappa),
        p_weight=np.clip(kappa / kmax, 1e-12, None),
    )
    report = engine.ac_solve(
        u.data, v.data, p.data, body_u, body_v, params.fluid_controls(), gauge=False
    )
    p.report = report
    if not report.converged:
        raise SolverError(
            f"traction fluid solve did not reach div tolerance "
            f"(residual {report.div_residual:.3e})",
            residual=report.div_residual,
        )
    return (u, v), p


def traction_imbalance(
    vel: tuple[Field, Field],
    p_f: Field,
    traction: TractionField,
    mask: CellMask,
    params: ElasticParams,
    mu,
    grid: StaggeredGrid,
) -> float:
    """Max mismatch between the one-sided fluid wall stress and the target."""
    t = mask.tables
    kappa = fluid_kappa(mask, params, mu, grid)
    ui, vi = vel[0].inner, vel[1].inner
    p = p_f.data
    worst = 0.0
    if t.uif_i.size:
        i, j, s = t.uif_i, t.uif_j, t.uif_sign
        k = kappa[t.uif_fcell_i, j]
        s11 = k * s * (ui[i + s, j] - ui[i, j]) / grid.h1 - p[t.uif_fcell_i, j]
        worst = max(worst, float(np.abs(s11 - traction.s11_u[i, j]).max()))
    if t.vif_i.size:
        i, j, s = t.vif_i, t.vif_j, t.vif_sign
        k = kappa[i, t.vif_fcell_j]
        s22 = k * s * (vi[i, j + s] - vi[i, j]) / grid.h2 - p[i, t.vif_fcell_j]
        worst = max(worst, float(np.abs(s22 - traction.s22_v[i, j]).max()))
    return worst


# ---------------------------------------------------------------------------
# Coupled step (Steps 1-4 with Aitken-relaxed continuity)
# ---------------------------------------------------------------------------

def _candidate_trace(
    state: CoupledState,
    vel: tuple[Field, Field],
    dt: float,
    mask: CellMask,
) -> InterfaceTrace:
    """Fluid displacement trace after integrating the wall velocities over dt."""
    t = mask.tables
    out = state.trace.copy()
    ui, vi = vel[0].inner, vel[1].inner
    out.n_u[t.uif_i, t.uif_j] += dt * ui[t.uif_i, t.uif_j]
    out.n_v[t.vif_i, t.vif_j] += dt * vi[t.vif_i, t.vif_j]
    # Tangential wall velocity = average of ghost and fluid-side face values.
    gi, gj, gsj = t.ughost_i, t.ughost_j, t.ughost_src_j
    out.t_u[gi, gj] += dt * 0.5 * (ui[gi, gj] + ui[gi, gsj])
    vgi, vgj, vgsi = t.vghost_i, t.vghost_j, t.vghost_src_i
    out.t_v[vgi, vgj] += dt * 0.5 * (vi[vgi, vgj] + vi[vgsi, vgj])
    return out


def coupled_step(
    state: CoupledState,
    dt: float,
    mask: CellMask,
    params: ElasticParams,
) -> CoupledState:
    """One coupled time step; returns the advanced state.

    Raises CflError if dt violates the transport CFL for the new velocity
    and CouplingError if displacement continuity cannot be met within
    k_couple Aitken sweeps.
    """
    grid = state.grid
    t = mask.tables
    rho_s_field = np.where(mask.chi, 0.0, params.rho_s)
    mu = state.transport.mu

    d = state.trace
    theta = state.aitken_theta
    history: list[float] = []
    r_prev = None
    accepted = None
    w_s = (state.w_s_u, state.w_s_v)
    p = state.p
    vel = (state.vel_u, state.vel_v)
    traction = None
    reports: list[SolveReport] = []

    for sweep in range(max(params.k_couple, 1)):
        w_s, p_s = solve_lame(
            rho_s_field, d, mask, params,
            grid=grid, p_init=p, w_init=w_s,
        )
        traction = interface_traction(w_s, p_s, mask, params, grid=grid)
        vel, p_f = solve_fluid_with_traction(
            state.transport.rho.data, traction, mask, params,
            grid=grid, mu=mu, p_init=p_s, v_init=vel,
        )
        p = p_f
        reports.append(p_f.report)
        cand = _candidate_trace(state, vel, dt, mask)
        r = cand.pack(t) - d.pack(t)
        res = float(np.abs(r).max()) if r.size else 0.0
        history.append(res)
        if res <= params.coupling_tol:
            accepted = cand
            break
        if r_prev is not None:
            dr = r - r_prev
            denom = float(dr @ dr)
            if denom > 0:
                theta = -theta * float(r_prev @ dr) / denom
            theta = float(np.clip(theta, 0.01, 1.0))
        d = d.unpack_like(t, d.pack(t) + theta * r)
        r_prev = r

    if accepted is None:
        raise CouplingError(
            f"displacement continuity not met after {params.k_couple} sweeps "
            f"(residual {history[-1]:.3e}, tol {params.coupling_tol:g})",
            residual_history=tuple(history),
        )

    imbalance = traction_imbalance(vel, p, traction, mask, params, mu, grid)
    if imbalance > 10.0 * params.div_tol:
        raise SolverError(
            f"traction balance residual {imbalance:.3e} exceeds 10*div_tol",
            residual=imbalance,
        )

    # Step 4: advance the fluid displacement; walls follow the accepted trace.
    w_f_u, w_f_v = state.w_f_u.copy(), state.w_f_v.copy()
    w_f_u.inner[t.u_fluid] += dt * vel[0].inner[t.u_fluid]
    w_f_v.inner[t.v_fluid] += dt * vel[1].inner[t.v_fluid]
    w_f_u.inner[t.uif_i, t.uif_j] = accepted.n_u[t.uif_i, t.uif_j]
    w_f_v.inner[t.vif_i, t.vif_j] = accepted.n_v[t.vif_i, t.vif_j]

    # Composite transport velocity: pores move with the fluid, the skeleton
    # with its per-step displacement increment, walls with the trace rate.
    ut, vt = grid.u_field(), grid.v_field()
    ut.inner[t.u_fluid] = vel[0].inner[t.u_fluid]
    vt.inner[t.v_fluid] = vel[1].inner[t.v_fluid]
    if dt > 0:
        ut.inner[t.u_solid] = (w_s[0].inner[t.u_solid] - state.w_s_u.inner[t.u_solid]) / dt
        vt.inner[t.v_solid] = (w_s[1].inner[t.v_solid] - state.w_s_v.inner[t.v_solid]) / dt
        ut.inner[t.uif_i, t.uif_j] = (
            accepted.n_u[t.uif_i, t.uif_j] - state.trace.n_u[t.uif_i, t.uif_j]
        ) / dt
        vt.inner[t.vif_i, t.vif_j] = (
            accepted.n_v[t.vif_i, t.vif_j] - state.trace.n_v[t.vif_i, t.vif_j]
        ) / dt

    transport = upwind_step(state.transport.with_dt(dt), (ut, vt), mask)

    # Unified pressure gauge over the whole domain (shift is coupling-neutral).
    p_new = p.copy()
    p_new.data -= p_new.data.mean()

    fluid_report = reports[-1]
    solid_report = p.report if False else None  # solid report lives on p_s of last sweep
    diag = CoupledDiagnostics(
        div_residual_fluid=fluid_report.div_residual,
        div_residual_solid=w_s[0].solid_div if hasattr(w_s[0], "solid_div") else 0.0,
        coupling_residual=history[-1],
        coupling_sweeps=len(history),
        traction_imbalance=imbalance,
        inner_sweeps=sum(r.inner_sweeps for r in reports),
        outer_sweeps=sum(r.outer_sweeps for r in reports),
        c_p_final=fluid_report.c_final,
        warnings=tuple(w for r in reports for w in r.warnings),
    )

    return CoupledState(
        grid=grid,
        w_f_u=w_f_u, w_f_v=w_f_v,
        w_s_u=w_s[0], w_s_v=w_s[1],
        p=p_new,
        transport=transport,
        trace=accepted,
        vel_u=vel[0], vel_v=vel[1],
        traction=traction,
        aitken_theta=theta,
        last=diag,
    )
