"""Staggered ("checkerboard") grid on the unit square and field containers.

Layout: pressure and density live at cell centers (i, j); the horizontal
velocity/displacement component u lives at vertical faces (i+1/2, j); the
vertical component v lives at horizontal faces (i, j+1/2).  Arrays are
indexed [i, j] with axis 0 along x1 and axis 1 along x2.  x2 increases in
the direction of gravity (downward), so "heavy on top" means large density
at small x2.

Face fields carry one ghost layer on every side; `Field.inner` is the view
without ghosts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CENTER = "c"
U_FACE = "u"
V_FACE = "v"


class StaggeringError(ValueError):
    """A field's shape or location does not match the expected staggering."""


@dataclass(frozen=True)
class StaggeredGrid:
    """Uniform MAC grid covering the unit square with nx-by-ny cells."""

    nx: int
    ny: int
    ghost_layers: int = 1

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid needs at least one cell per direction, got {self.nx}x{self.ny}")
        if self.ghost_layers != 1:
            raise ValueError("only one ghost layer is supported (first-order boundary treatment)")

    @property
    def h1(self) -> float:
        return 1.0 / self.nx

    @property
    def h2(self) -> float:
        return 1.0 / self.ny

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    # Coordinates (1-D arrays along each axis).
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.h1

    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.h2

    def x_ufaces(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.h1

    def y_vfaces(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.h2

    def inner_shape(self, loc: str) -> tuple[int, int]:
        if loc == CENTER:
            return (self.nx, self.ny)
        if loc == U_FACE:
            return (self.nx + 1, self.ny)
        if loc == V_FACE:
            return (self.nx, self.ny + 1)
        raise StaggeringError(f"unknown field location {loc!r}")

    def center_field(self) -> "Field":
        return Field(CENTER, self, np.zeros(self.inner_shape(CENTER)))

    def u_field(self) -> "Field":
        n, m = self.inner_shape(U_FACE)
        return Field(U_FACE, self, np.zeros((n + 2, m + 2)))

    def v_field(self) -> "Field":
        n, m = self.inner_shape(V_FACE)
        return Field(V_FACE, self, np.zeros((n + 2, m + 2)))

    def field(self, loc: str) -> "Field":
        return {CENTER: self.center_field, U_FACE: self.u_field, V_FACE: self.v_field}[loc]()


@dataclass
class Field:
    """A scalar grid field at one staggering location.

    Center fields store exactly the (nx, ny) cell values; face fields store
    the face values plus a one-cell ghost rim (so `data` is 2 larger in each
    direction than the logical face count).  A vector field is an ordinary
    (u: Field, v: Field) pair.
    """

    loc: str
    grid: StaggeredGrid = field(repr=False)
    data: np.ndarray

    def __post_init__(self):
        expected = self.grid.inner_shape(self.loc)
        if self.loc != CENTER:
            expected = (expected[0] + 2, expected[1] + 2)
        if self.data.shape != expected:
            raise StaggeringError(
                f"{self.loc}-field data has shape {self.data.shape}, expected {expected}"
            )

    @property
    def inner(self) -> np.ndarray:
        """View of the field without ghost cells."""
        if self.loc == CENTER:
            return self.data
        return self.data[1:-1, 1:-1]

    def copy(self) -> "Field":
        return Field(self.loc, self.grid, self.data.copy())

    def fill(self, value: float) -> "Field":
        self.data[...] = value
        return self


def require_loc(f: Field, loc: str, name: str = "field"):
    if f.loc != loc:
        raise StaggeringError(f"{name} must live at {loc!r} faces, got {f.loc!r}")


def as_center(grid: StaggeredGrid, values: np.ndarray) -> Field:
    values = np.asarray(values, dtype=float)
    return Field(CENTER, grid, values.copy())
