"""Periodic pore-space masks and face classification.

Two microstructures are supported on the unit square, both with period
eps = 1/n:

* capillaries -- vertical fluid strips of width m*eps, one per period,
  centered in the period so the layout is mirror symmetric;
* disjoint_squares -- a centered solid square per eps x eps period whose
  side is chosen so the fluid fraction equals the porosity m.

Cells are assigned by cell-center membership (no cut cells).  Faces are
classified as fluid, solid, interface (pore/skeleton wall) or outer
(domain boundary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from scipy import ndimage

from .grid import StaggeredGrid

FLUID = np.int8(0)
SOLID = np.int8(1)
INTERFACE = np.int8(2)
OUTER = np.int8(3)

FACE_CLASS_NAMES = {0: "fluid", 1: "solid", 2: "interface", 3: "outer"}


class GeometryKind(str, Enum):
    CAPILLARIES = "capillaries"
    DISJOINT_SQUARES = "disjoint_squares"
    ALL_FLUID = "all_fluid"


class GeometryError(ValueError):
    """The requested mask cannot be resolved on the given grid."""


@dataclass
class CellMask:
    """Pore-space indicator plus face classification on a staggered grid."""

    nx: int
    ny: int
    chi: np.ndarray             # (nx, ny) bool, True = fluid
    u_class: np.ndarray | None = None   # (nx+1, ny) int8
    v_class: np.ndarray | None = None   # (nx, ny+1) int8
    kind: GeometryKind = GeometryKind.ALL_FLUID
    periods: int = 1
    porosity: float = 1.0

    @property
    def fluid_fraction(self) -> float:
        return float(np.count_nonzero(self.chi)) / (self.nx * self.ny)

    @property
    def n_fluid_cells(self) -> int:
        return int(np.count_nonzero(self.chi))

    def face_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {name: 0 for name in FACE_CLASS_NAMES.values()}
        for arr in (self.u_class, self.v_class):
            if arr is None:
                continue
            for code, name in FACE_CLASS_NAMES.items():
                counts[name] += int(np.count_nonzero(arr == code))
        return counts

    @cached_property
    def tables(self) -> "FaceTables":
        if self.u_class is None or self.v_class is None:
            raise GeometryError("face classification missing; run classify_faces first")
        return _build_tables(self)


def build_mask(
    kind: GeometryKind,
    n: int,
    m: float,
    grid: StaggeredGrid,
    porosity_convention: str = "fluid",
) -> CellMask:
    """Construct the pore-space mask chi for one of the paper geometries.

    `n` is the number of periods per unit length (eps = 1/n); `m` the
    porosity.  With porosity_convention="fluid" (default) m is the fluid
    fraction; "solid" flips the role, which matters for the squares
    geometry where the source formula is ambiguous.
    """
    kind = GeometryKind(kind)
    nx, ny = grid.nx, grid.ny
    if kind is GeometryKind.ALL_FLUID:
        chi = np.ones((nx, ny), dtype=bool)
        mask = CellMask(nx, ny, chi, kind=kind, periods=max(int(n), 1), porosity=1.0)
        return classify_faces(mask, grid)

    if n < 1:
        raise GeometryError(f"need at least one period, got n={n}")
    if not (0.0 < m < 1.0):
        raise GeometryError(f"porosity must lie in (0, 1), got m={m}")
    if porosity_convention not in ("fluid", "solid"):
        raise GeometryError(f"unknown porosity convention {porosity_convention!r}")
    fluid_frac = m if porosity_convention == "fluid" else 1.0 - m

    if nx % n:
        raise GeometryError(f"nx={nx} is not a multiple of the period count n={n}")
    px = nx // n
    if px < 4:
        raise GeometryError(f"resolution too coarse: {px} cells per period, need at least 4")

    if kind is GeometryKind.CAPILLARIES:
        # Fluid strip of width fluid_frac*eps centered in each period.
        r = np.arange(nx) % px
        fluid_col = np.abs(2 * r + 1 - px) < fluid_frac * px
        ncols = int(np.count_nonzero(fluid_col[:px]))
        if ncols < 1:
            raise GeometryError(f"capillary narrower than one cell (m*cells_per_period={fluid_frac * px:.2f})")
        if ncols < 2 or px - ncols < 2:
            raise GeometryError(
                f"capillary layout needs >= 2 fluid and >= 2 solid cells per period, "
                f"got {ncols} fluid / {px - ncols} solid"
            )
        chi = np.repeat(fluid_col[:, None], ny, axis=1)
    else:  # DisjointSquares
        if ny % n:
            raise GeometryError(f"ny={ny} is not a multiple of the period count n={n}")
        py = ny // n
        if py < 4:
            raise GeometryError(f"resolution too coarse: {py} cells per period (x2), need at least 4")
        side = math.sqrt(1.0 - fluid_frac)  # solid square side in period units
        r = np.arange(nx) % px
        s = np.arange(ny) % py
        in_x = np.abs(2 * r + 1 - px) < side * px
        in_y = np.abs(2 * s + 1 - py) < side * py
        ncx = int(np.count_nonzero(in_x[:px]))
        ncy = int(np.count_nonzero(in_y[:py]))
        if ncx < 2 or ncy < 2:
            raise GeometryError(f"solid square resolves to {ncx}x{ncy} cells, need at least 2x2")
        if px - ncx < 2 or py - ncy < 2:
            raise GeometryError(
                f"pore channels resolve to {px - ncx}x{py - ncy} cells, need at least 2x2"
            )
        chi = ~(in_x[:, None] & in_y[None, :])

    mask = CellMask(nx, ny, chi, kind=kind, periods=n, porosity=fluid_frac)
    return classify_faces(mask, grid)


def classify_faces(mask: CellMask, grid: StaggeredGrid) -> CellMask:
    """Return a copy of `mask` with every u- and v-face tagged.

    Faces on the domain boundary are `outer`; interior faces are `fluid`,
    `solid`, or `interface` according to the two adjacent cells.  The result
    is a total, traversal-order-independent function of chi.
    """
    nx, ny = mask.nx, mask.ny
    if (nx, ny) != (grid.nx, grid.ny):
        raise GeometryError(f"mask is {nx}x{ny} but grid is {grid.nx}x{grid.ny}")
    chi = mask.chi

    u_class = np.empty((nx + 1, ny), dtype=np.int8)
    left, right = chi[:-1, :], chi[1:, :]
    u_class[1:-1, :] = np.where(left & right, FLUID, np.where(~left & ~right, SOLID, INTERFACE))
    u_class[0, :] = OUTER
    u_class[-1, :] = OUTER

    v_class = np.empty((nx, ny + 1), dtype=np.int8)
    lower, upper = chi[:, :-1], chi[:, 1:]
    v_class[:, 1:-1] = np.where(lower & upper, FLUID, np.where(~lower & ~upper, SOLID, INTERFACE))
    v_class[:, 0] = OUTER
    v_class[:, -1] = OUTER

    return CellMask(
        nx, ny, chi.copy(), u_class, v_class,
        kind=mask.kind, periods=mask.periods, porosity=mask.porosity,
    )


@dataclass
class FaceTables:
    """Index tables derived from a classified mask, shared by the solvers.

    Ghost slots are faces that are not unknowns of a solve but sit directly
    across a wall from one, and therefore carry fictitious-cell values.
    `*_ghost_*` tables serve the fluid solves (slot in the skeleton),
    `*_sghost_*` tables the Lame solve (slot in the pore space).
    """

    # Boolean classification masks, inner face shapes.
    u_fluid: np.ndarray
    v_fluid: np.ndarray
    u_solid: np.ndarray
    v_solid: np.ndarray
    u_iface: np.ndarray
    v_iface: np.ndarray

    # Tangential ghost slots for fluid solves: solid faces next to fluid ones.
    ughost_i: np.ndarray
    ughost_j: np.ndarray
    ughost_src_j: np.ndarray     # j of the fluid source face (same i)
    ughost_wall_j: np.ndarray    # v-face row of the wall between slot and source
    vghost_i: np.ndarray
    vghost_j: np.ndarray
    vghost_src_i: np.ndarray
    vghost_wall_i: np.ndarray

    # Tangential ghost slots for the Lame solve: fluid faces next to solid ones.
    usghost_i: np.ndarray
    usghost_j: np.ndarray
    usghost_src_j: np.ndarray
    usghost_wall_j: np.ndarray
    vsghost_i: np.ndarray
    vsghost_j: np.ndarray
    vsghost_src_i: np.ndarray
    vsghost_wall_i: np.ndarray

    # Interface faces: position, orientation, fluid/solid cell neighbours.
    uif_i: np.ndarray
    uif_j: np.ndarray
    uif_sign: np.ndarray         # +1 if the fluid cell is on the +x1 side
    uif_fcell_i: np.ndarray      # fluid cell index (i of cell, j = uif_j)
    uif_scell_i: np.ndarray      # solid cell index
    uif_comp: np.ndarray         # solid component id (0-based)
    vif_i: np.ndarray
    vif_j: np.ndarray
    vif_sign: np.ndarray
    vif_fcell_j: np.ndarray
    vif_scell_j: np.ndarray
    vif_comp: np.ndarray

    n_solid_components: int
    component_areas: np.ndarray  # cell count per solid component
    ghost_conflicts: int = 0     # faces wanting two-sided ghosts (degenerate geometry)

    solid_labels: np.ndarray = field(default=None, repr=False)


def _ghost_slots(active_src: np.ndarray, slot: np.ndarray, axis: int):
    """Slots in `slot` with an `active_src` neighbour one step +/- along axis.

    Returns (idx_i, idx_j, src_i, src_j, wall_index, n_conflicts); the wall
    index is the face row/column of the wall edge between slot and source.
    """
    from_minus = np.zeros_like(slot)
    from_plus = np.zeros_like(slot)
    if axis == 1:
        from_minus[:, 1:] = slot[:, 1:] & active_src[:, :-1]
        from_plus[:, :-1] = slot[:, :-1] & active_src[:, 1:]
    else:
        from_minus[1:, :] = slot[1:, :] & active_src[:-1, :]
        from_plus[:-1, :] = slot[:-1, :] & active_src[1:, :]
    conflicts = int(np.count_nonzero(from_minus & from_plus))
    # Precedence: plus-side source wins on (degenerate) two-sided slots.
    from_minus &= ~from_plus

    ii_m, jj_m = np.nonzero(from_minus)
    ii_p, jj_p = np.nonzero(from_plus)
    if axis == 1:
        src_j = np.concatenate([jj_m - 1, jj_p + 1])
        src_i = np.concatenate([ii_m, ii_p])
        wall = np.concatenate([jj_m, jj_p + 1])
    else:
        src_i = np.concatenate([ii_m - 1, ii_p + 1])
        src_j = np.concatenate([jj_m, jj_p])
        wall = np.concatenate([ii_m, ii_p + 1])
    ii = np.concatenate([ii_m, ii_p])
    jj = np.concatenate([jj_m, jj_p])
    order = np.lexsort((jj, ii))
    return ii[order], jj[order], src_i[order], src_j[order], wall[order], conflicts


def _build_tables(mask: CellMask) -> FaceTables:
    chi = mask.chi
    u_fluid = mask.u_class == FLUID
    v_fluid = mask.v_class == FLUID
    u_solid = mask.u_class == SOLID
    v_solid = mask.v_class == SOLID
    u_iface = mask.u_class == INTERFACE
    v_iface = mask.v_class == INTERFACE

    gi, gj, _, gsj, gwj, c1 = _ghost_slots(u_fluid, u_solid, axis=1)
    vgi, vgj, vgsi, _, vgwi, c2 = _ghost_slots(v_fluid, v_solid, axis=0)
    sgi, sgj, _, sgsj, sgwj, c3 = _ghost_slots(u_solid, u_fluid, axis=1)
    svgi, svgj, svgsi, _, svgwi, c4 = _ghost_slots(v_solid, v_fluid, axis=0)

    labels, ncomp = ndimage.label(~chi)
    areas = np.zeros(max(ncomp, 1), dtype=int)
    for k in range(ncomp):
        areas[k] = int(np.count_nonzero(labels == k + 1))

    uif_i, uif_j = np.nonzero(u_iface)
    # u-face i separates cells (i-1, j) and (i, j); interface faces are interior.
    fluid_right = chi[uif_i, uif_j]
    uif_sign = np.where(fluid_right, 1, -1).astype(np.int8)
    uif_fcell_i = np.where(fluid_right, uif_i, uif_i - 1)
    uif_scell_i = np.where(fluid_right, uif_i - 1, uif_i)
    uif_comp = labels[uif_scell_i, uif_j] - 1

    vif_i, vif_j = np.nonzero(v_iface)
    fluid_up = chi[vif_i, vif_j]
    vif_sign = np.where(fluid_up, 1, -1).astype(np.int8)
    vif_fcell_j = np.where(fluid_up, vif_j, vif_j - 1)
    vif_scell_j = np.where(fluid_up, vif_j - 1, vif_j)
    vif_comp = labels[vif_i, vif_scell_j] - 1

    return FaceTables(
        u_fluid=u_fluid, v_fluid=v_fluid, u_solid=u_solid, v_solid=v_solid,
        u_iface=u_iface, v_iface=v_iface,
        ughost_i=gi, ughost_j=gj, ughost_src_j=gsj, ughost_wall_j=gwj,
        vghost_i=vgi, vghost_j=vgj, vghost_src_i=vgsi, vghost_wall_i=vgwi,
        usghost_i=sgi, usghost_j=sgj, usghost_src_j=sgsj, usghost_wall_j=sgwj,
        vsghost_i=svgi, vsghost_j=svgj, vsghost_src_i=svgsi, vsghost_wall_i=svgwi,
        uif_i=uif_i, uif_j=uif_j, uif_sign=uif_sign,
        uif_fcell_i=uif_fcell_i, uif_scell_i=uif_scell_i, uif_comp=uif_comp,
        vif_i=vif_i, vif_j=vif_j, vif_sign=vif_sign,
        vif_fcell_j=vif_fcell_j, vif_scell_j=vif_scell_j, vif_comp=vif_comp,
        n_solid_components=int(ncomp),
        component_areas=areas,
        ghost_conflicts=c1 + c2 + c3 + c4,
        solid_labels=labels,
    )
