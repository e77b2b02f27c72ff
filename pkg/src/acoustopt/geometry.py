"""Rectangular acoustic domain, voxel grid and element/subvoxel index maps.

Fields over the full grid are stored as ``(ny, nx)`` arrays indexed ``[j, i]``
with ``j`` counting rows upward from the floor (origin bottom-left).  Fields over
the ceiling are ``(n_ceiling, nx)`` arrays using the same orientation; row 0 is
the lowest ceiling row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "ProblemSetup",
    "VoxelGrid",
    "Discretization",
    "build_grid",
    "voxel_to_element_map",
]


@dataclass(frozen=True)
class ProblemSetup:
    """Geometry (m), excitation and damping of the ceiling problem.

    Defaults are the reference configuration: an 18 m x 9 m room with a 1 m
    designable ceiling, a source at (2, 2) and a 2 m x 2 m quiet zone centered
    at (16, 2).
    """

    a: float = 18.0
    b: float = 9.0
    h_c: float = 1.0
    x_f: float = 2.0
    y_f: float = 2.0
    x_s: float = 16.0
    y_s: float = 2.0
    a_s: float = 2.0
    b_s: float = 2.0
    frequency: float = 69.43
    s_hat: float = 10.0
    eta_d: float = 0.01

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ConfigurationError("domain dimensions must be positive")
        if not 0 < self.h_c < self.b:
            raise ConfigurationError(f"ceiling height h_c={self.h_c} must lie in (0, b={self.b})")
        if not (0 <= self.x_f <= self.a and 0 <= self.y_f <= self.b):
            raise ConfigurationError(f"source ({self.x_f}, {self.y_f}) outside the domain")
        if self.a_s <= 0 or self.b_s <= 0:
            raise ConfigurationError("suppression region must have positive size")
        x0, x1, y0, y1 = self.suppression_bounds
        if x0 < 0 or y0 < 0 or x1 > self.a or y1 > self.b:
            raise ConfigurationError("suppression region is not inside the domain")
        if self.frequency <= 0:
            raise ConfigurationError("frequency must be positive")
        if self.eta_d < 0:
            raise ConfigurationError("damping coefficient must be non-negative")

    @property
    def suppression_bounds(self):
        return (
            self.x_s - self.a_s / 2,
            self.x_s + self.a_s / 2,
            self.y_s - self.b_s / 2,
            self.y_s + self.b_s / 2,
        )


@dataclass(frozen=True)
class VoxelGrid:
    setup: ProblemSetup
    nx: int
    ny: int
    n_ceiling: int
    # index ranges [i0, i1) x [j0, j1) of the suppression region
    suppression: tuple
    dx: float = field(init=False)
    dy: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dx", self.setup.a / self.nx)
        object.__setattr__(self, "dy", self.setup.b / self.ny)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def design_shape(self):
        return (self.n_ceiling, self.nx)

    @property
    def n_design(self):
        return self.n_ceiling * self.nx

    @property
    def design_row0(self):
        """First (lowest) grid row belonging to the ceiling."""
        return self.ny - self.n_ceiling

    @property
    def design_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.design_row0:, :] = True
        return mask

    @property
    def suppression_mask(self):
        i0, i1, j0, j1 = self.suppression
        mask = np.zeros(self.shape, dtype=bool)
        mask[j0:j1, i0:i1] = True
        return mask

    @property
    def suppression_area(self):
        i0, i1, j0, j1 = self.suppression
        return (i1 - i0) * (j1 - j0) * self.dx * self.dy

    def voxel_centers(self):
        """Return ``(X, Y)`` arrays of voxel center coordinates, shape ``(ny, nx)``."""
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y)

    def design_centers(self):
        X, Y = self.voxel_centers()
        return X[self.design_row0:], Y[self.design_row0:]

    def embed_design(self, design, background=0.0):
        """Place a ceiling field into a full-grid field filled with ``background``."""
        design = np.asarray(design, dtype=float).reshape(self.design_shape)
        full = np.full(self.shape, background, dtype=float)
        full[self.design_row0:, :] = design
        return full

    def extract_design(self, full):
        return np.asarray(full).reshape(self.shape)[self.design_row0:, :]


def _snap(value, spacing, what):
    cells = value / spacing
    k = int(round(cells))
    if abs(cells - k) > 0.5 + 1e-9:  # pragma: no cover - unreachable by rounding
        raise ConfigurationError(f"{what} does not align with the voxel grid")
    return k


def build_grid(setup: ProblemSetup, nx: int, ny: int) -> VoxelGrid:
    """Build the voxel grid, snapping the ceiling band and the quiet zone to grid lines.

    Every boundary is moved to the nearest grid line (at most half a voxel).
    A configuration whose snapped ceiling or quiet zone collapses to zero
    voxels, or whose ceiling swallows the whole domain, is rejected.
    """
    if nx < 2 or ny < 2:
        raise ConfigurationError(f"grid needs at least 2x2 voxels, got {nx}x{ny}")
    dx, dy = setup.a / nx, setup.b / ny
    n_ceiling = _snap(setup.h_c, dy, "ceiling band")
    if n_ceiling < 1 or n_ceiling >= ny:
        raise ConfigurationError(
            f"ceiling height {setup.h_c} m snaps to {n_ceiling} voxel rows on a {ny}-row grid"
        )
    x0, x1, y0, y1 = setup.suppression_bounds
    i0, i1 = _snap(x0, dx, "suppression region"), _snap(x1, dx, "suppression region")
    j0, j1 = _snap(y0, dy, "suppression region"), _snap(y1, dy, "suppression region")
    if i1 <= i0 or j1 <= j0:
        raise ConfigurationError("suppression region snaps to an empty voxel set")
    if j1 > ny - n_ceiling:
        raise ConfigurationError("suppression region overlaps the ceiling")
    return VoxelGrid(setup, nx, ny, n_ceiling, (i0, i1, j0, j1))


@dataclass(frozen=True)
class Discretization:
    """Polynomial degree ``q`` and ``n_v`` subvoxels per element edge on a voxel grid."""

    grid: VoxelGrid
    q: int
    n_v: int

    def __post_init__(self):
        if self.q < 1:
            raise ConfigurationError(f"polynomial degree must be >= 1, got {self.q}")
        if self.n_v < 1:
            raise ConfigurationError(f"n_v must be >= 1, got {self.n_v}")
        if self.grid.nx % self.n_v or self.grid.ny % self.n_v:
            raise ConfigurationError(
                f"n_v={self.n_v} does not divide the {self.grid.nx}x{self.grid.ny} voxel grid"
            )

    @property
    def ex(self):
        return self.grid.nx // self.n_v

    @property
    def ey(self):
        return self.grid.ny // self.n_v

    @property
    def n_elements(self):
        return self.ex * self.ey

    @property
    def hx(self):
        return self.n_v * self.grid.dx

    @property
    def hy(self):
        return self.n_v * self.grid.dy

    @property
    def n_local(self):
        return (self.q + 1) ** 2

    @property
    def n1x(self):
        return self.ex * self.q + 1

    @property
    def n1y(self):
        return self.ey * self.q + 1

    @property
    def n_dofs(self):
        return self.n1x * self.n1y

    def _dofs_1d(self, n_el):
        q = self.q
        e = np.arange(n_el)[:, None]
        local = np.arange(q + 1)[None, :]
        # vertex modes at e*q and (e+1)*q, internal modes in between
        g = e * q + np.where(local == 0, 0, np.where(local == 1, q, local - 1))
        return g

    def element_dofs(self):
        """Global dof numbers of every element, shape ``(n_elements, (q+1)**2)``.

        Local mode ``(a, b)`` (``a`` along x, ``b`` along y) sits at column
        ``b*(q+1) + a``; elements are numbered row by row from the bottom.
        The global basis is the tensor product of 1-D C0 hierarchical bases, so
        vertex, edge and bubble modes fall out of the 1-D numbering.
        """
        gx = self._dofs_1d(self.ex)  # (ex, q+1)
        gy = self._dofs_1d(self.ey)
        dofs = gy[:, None, :, None] * self.n1x + gx[None, :, None, :]
        return dofs.reshape(self.n_elements, self.n_local)

    def element_voxels(self):
        """Flat voxel index (``j*nx + i``) of every subvoxel, shape ``(n_elements, n_v**2)``.

        Subvoxel ``(si, sj)`` of an element has local index ``sj*n_v + si``.
        """
        n_v, nx = self.n_v, self.grid.nx
        ei = np.arange(self.ex)
        ej = np.arange(self.ey)
        s = np.arange(n_v)
        i = ei[None, :, None, None] * n_v + s[None, None, None, :]
        j = ej[:, None, None, None] * n_v + s[None, None, :, None]
        return (j * nx + i).reshape(self.n_elements, n_v * n_v)


def voxel_to_element_map(grid: VoxelGrid, disc: Discretization):
    """Map every voxel to ``(element_i, element_j, sub_i, sub_j)``.

    Returns four ``(ny, nx)`` integer arrays.
    """
    if disc.grid is not grid and (disc.grid.nx, disc.grid.ny) != (grid.nx, grid.ny):
        raise ConfigurationError("discretization belongs to a different grid")
    n_v = disc.n_v
    if grid.nx % n_v or grid.ny % n_v:
        raise ConfigurationError(f"n_v={n_v} does not divide the voxel grid")
    j, i = np.mgrid[0:grid.ny, 0:grid.nx]
    return i // n_v, j // n_v, i % n_v, j % n_v
