"""Discrete differential operators and boundary-condition application.

All operators are pure: fields in, new field out.  Stencils are the
standard second-order ones of the staggered layout; boundary and pore-wall
conditions enter through one layer of fictitious (ghost) values, filled by
`apply_bc` so the interior stencils apply uniformly.
"""

from __future__ import annotations

import numpy as np

from .geometry import FLUID, SOLID, CellMask
from .grid import CENTER, U_FACE, V_FACE, Field, StaggeredGrid, require_loc

BC_KINDS = ("no_slip", "impermeability_slip")


def divergence(u: Field, v: Field) -> Field:
    """Cell-centered divergence of a staggered vector field."""
    require_loc(u, U_FACE, "u")
    require_loc(v, V_FACE, "v")
    g = u.grid
    out = g.center_field()
    out.data[...] = divergence_arrays(u.inner, v.inner, g)
    return out


def divergence_arrays(u_inner: np.ndarray, v_inner: np.ndarray, grid: StaggeredGrid) -> np.ndarray:
    return (u_inner[1:, :] - u_inner[:-1, :]) / grid.h1 + (v_inner[:, 1:] - v_inner[:, :-1]) / grid.h2


def gradient(p: Field) -> tuple[Field, Field]:
    """Pressure gradient at faces; faces on the domain boundary get zero."""
    require_loc(p, CENTER, "p")
    g = p.grid
    gu, gv = g.u_field(), g.v_field()
    gu.inner[1:-1, :] = (p.data[1:, :] - p.data[:-1, :]) / g.h1
    gv.inner[:, 1:-1] = (p.data[:, 1:] - p.data[:, :-1]) / g.h2
    return gu, gv


def masked_vector_laplacian(f: Field, mask: CellMask, region: str = "fluid") -> Field:
    """Plain 5-point Laplacian at faces classified fluid (or solid), zero elsewhere.

    Ghost/interface values of `f` must already be imposed via `apply_bc`.
    """
    if f.loc not in (U_FACE, V_FACE):
        raise ValueError("masked_vector_laplacian expects a face field")
    g = f.grid
    a = f.data
    lap = (
        (a[2:, 1:-1] - 2.0 * a[1:-1, 1:-1] + a[:-2, 1:-1]) / g.h1**2
        + (a[1:-1, 2:] - 2.0 * a[1:-1, 1:-1] + a[1:-1, :-2]) / g.h2**2
    )
    cls = mask.u_class if f.loc == U_FACE else mask.v_class
    code = FLUID if region == "fluid" else SOLID
    out = g.field(f.loc)
    out.inner[...] = np.where(cls == code, lap, 0.0)
    return out


def apply_bc(f: Field, mask: CellMask, kind: str = "no_slip") -> Field:
    """Return a copy of `f` with wall values and ghost layers filled.

    The normal component on the outer boundary S and the pore walls S^eps
    is set to zero; tangential ghost values reflect with sign -1 (no_slip),
    so the wall-interpolated tangential velocity vanishes, or are copied
    (impermeability_slip).  Idempotent.
    """
    if kind not in BC_KINDS:
        raise ValueError(f"unknown bc kind {kind!r}")
    if f.loc not in (U_FACE, V_FACE):
        raise ValueError("apply_bc expects a face field")
    out = f.copy()
    s = -1.0 if kind == "no_slip" else 1.0
    t = mask.tables
    if f.loc == U_FACE:
        fill_u_noslip(out.data, t, s)
    else:
        fill_v_noslip(out.data, t, s)
    return out


def fill_u_noslip(a: np.ndarray, t, s: float):
    """In-place ghost fill for a u-face array (with rim) in a fluid solve."""
    inner = a[1:-1, 1:-1]
    inner[~t.u_fluid] = 0.0
    inner[t.ughost_i, t.ughost_j] = s * inner[t.ughost_i, t.ughost_src_j]
    a[1:-1, 0] = s * a[1:-1, 1]
    a[1:-1, -1] = s * a[1:-1, -2]
    a[0, :] = 0.0
    a[-1, :] = 0.0


def fill_v_noslip(a: np.ndarray, t, s: float):
    """In-place ghost fill for a v-face array (with rim) in a fluid solve."""
    inner = a[1:-1, 1:-1]
    inner[~t.v_fluid] = 0.0
    inner[t.vghost_i, t.vghost_j] = s * inner[t.vghost_src_i, t.vghost_j]
    a[0, 1:-1] = s * a[1, 1:-1]
    a[-1, 1:-1] = s * a[-2, 1:-1]
    a[:, 0] = 0.0
    a[:, -1] = 0.0


def cell_to_vface(c: np.ndarray, grid: StaggeredGrid) -> np.ndarray:
    """Arithmetic average of cell values onto interior v-faces (zero on outer)."""
    out = np.zeros(grid.inner_shape(V_FACE))
    out[:, 1:-1] = 0.5 * (c[:, :-1] + c[:, 1:])
    return out


def cell_to_uface(c: np.ndarray, grid: StaggeredGrid) -> np.ndarray:
    out = np.zeros(grid.inner_shape(U_FACE))
    out[1:-1, :] = 0.5 * (c[:-1, :] + c[1:, :])
    return out


def corner_average(kappa: np.ndarray, weight: np.ndarray, grid: StaggeredGrid) -> np.ndarray:
    """Weighted mean of the (up to) 4 cells around each grid node.

    `weight` is 1.0 on cells that belong to the solve region; nodes with no
    in-region neighbour get 1.0 (their links are never used).
    """
    nx, ny = grid.nx, grid.ny
    kw = np.zeros((nx + 2, ny + 2))
    w = np.zeros((nx + 2, ny + 2))
    kw[1:-1, 1:-1] = kappa * weight
    w[1:-1, 1:-1] = weight
    num = kw[:-1, :-1] + kw[1:, :-1] + kw[:-1, 1:] + kw[1:, 1:]
    den = w[:-1, :-1] + w[1:, :-1] + w[:-1, 1:] + w[1:, 1:]
    return np.where(den > 0, num / np.maximum(den, 1.0), 1.0)


def link_coefficients(kappa: np.ndarray, region: np.ndarray, grid: StaggeredGrid, loc: str):
    """Variable-coefficient links (kE, kW, kN, kS) for div(kappa grad .) at faces.

    Cell-aligned links take the adjacent cell's kappa (arithmetic-average
    rule); transverse links take the masked corner average.  Values at faces
    outside the solve region are placeholders.
    """
    nx, ny = grid.nx, grid.ny
    weight = region.astype(float)
    corner = corner_average(kappa, weight, grid)
    if loc == U_FACE:
        kE = np.ones((nx + 1, ny))
        kW = np.ones((nx + 1, ny))
        kE[:-1, :] = kappa
        kW[1:, :] = kappa
        kN = corner[:, 1:]
        kS = corner[:, :-1]
    elif loc == V_FACE:
        kE = corner[1:, :]
        kW = corner[:-1, :]
        kN = np.ones((nx, ny + 1))
        kS = np.ones((nx, ny + 1))
        kN[:, :-1] = kappa
        kS[:, 1:] = kappa
    else:
        raise ValueError(f"no link coefficients at location {loc!r}")
    return kE, kW, kN, kS


def streamfunction_velocity(psi: np.ndarray, grid: StaggeredGrid) -> tuple[Field, Field]:
    """Exactly divergence-free staggered velocity from a nodal streamfunction.

    psi has shape (nx+1, ny+1); a zero boundary rim of psi gives zero normal
    velocity on the outer boundary.  Useful for transport tests and demos.
    """
    if psi.shape != (grid.nx + 1, grid.ny + 1):
        raise ValueError(f"psi must be nodal, shape {(grid.nx + 1, grid.ny + 1)}")
    u, v = grid.u_field(), grid.v_field()
    u.inner[...] = (psi[:, 1:] - psi[:, :-1]) / grid.h2
    v.inner[...] = -(psi[1:, :] - psi[:-1, :]) / grid.h1
    return u, v
