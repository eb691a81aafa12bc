"""Finite lattice geometry on Z^2.

A LatticeDomain is a bounded set of interior sites D together with its
boundary ring, oriented bonds, and dense-mask index machinery.  The boundary
is exactly the set of sites of Z^2 \\ D at Euclidean distance 1 from D, i.e.
the 4-neighbors of D outside D.  All heavy numerics in the package run on
dense 2D grids covering the bounding box of D plus its boundary; fields over
the interior are 1D arrays aligned with `domain.interior_sites` (row-major:
sorted by j, then i).

Depth convention.  Inner regions D(r) and annuli are carved by the depth of
a site, defined here as (Euclidean distance to the nearest boundary site)
minus one, so that the ring of sites adjacent to the boundary has depth 0 and
D(1) peels exactly one layer off a rectangle.  D(0) is always all of D.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DomainError

Site = tuple[int, int]

E1: Site = (1, 0)
E2: Site = (0, 1)


class Orientation(Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


@dataclass(frozen=True)
class Bond:
    """Oriented nearest-neighbor bond.  Canonical storage points along +e1/+e2."""

    tail: Site
    head: Site

    def __post_init__(self):
        di = self.head[0] - self.tail[0]
        dj = self.head[1] - self.tail[1]
        if abs(di) + abs(dj) != 1:
            raise DomainError(f"bond endpoints must be nearest neighbors: {self.tail} -> {self.head}")

    @property
    def orientation(self) -> Orientation:
        return Orientation.HORIZONTAL if self.head[0] != self.tail[0] else Orientation.VERTICAL

    @property
    def is_canonical(self) -> bool:
        return (self.head[0] - self.tail[0], self.head[1] - self.tail[1]) in (E1, E2)

    def reversed(self) -> "Bond":
        return Bond(self.head, self.tail)

    def canonical(self) -> "Bond":
        return self if self.is_canonical else self.reversed()


class LatticeDomain:
    """Bounded subgraph of Z^2 with boundary ring, bond sets, and masks."""

    def __init__(self, sites: Iterable[Site], *, allow_disconnected: bool = False):
        pts = np.asarray(sorted({(int(i), int(j)) for (i, j) in sites}, key=lambda s: (s[1], s[0])), dtype=np.int64)
        if pts.size == 0:
            pts = pts.reshape(0, 2)
        self._build(pts, allow_disconnected=allow_disconnected)

    # -- construction -----------------------------------------------------

    def _build(self, pts: np.ndarray, allow_disconnected: bool):
        self.interior_sites = pts
        self.n_interior = len(pts)
        if self.n_interior == 0:
            self._build_empty()
            return

        i0, j0 = pts[:, 0].min() - 1, pts[:, 1].min() - 1
        W = pts[:, 0].max() + 1 - i0 + 1
        H = pts[:, 1].max() + 1 - j0 + 1
        self.origin = (int(i0), int(j0))
        self.grid_shape = (int(H), int(W))

        interior = np.zeros((H, W), dtype=bool)
        interior[pts[:, 1] - j0, pts[:, 0] - i0] = True
        self.interior_mask = interior

        self.connected = True
        if self.n_interior > 1:
            _, ncomp = ndimage.label(interior, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
            self.connected = ncomp == 1
            if not self.connected and not allow_disconnected:
                raise DomainError("interior is not 4-connected")

        # boundary = 4-dilation of the interior, minus the interior
        dil = ndimage.binary_dilation(interior, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
        boundary = dil & ~interior
        self.boundary_mask = boundary

        rows, cols = np.nonzero(boundary)
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        self.boundary_sites = np.column_stack([cols + i0, rows + j0]).astype(np.int64)
        self.n_boundary = len(self.boundary_sites)

        self.site_index = np.full((H, W), -1, dtype=np.int64)
        self.site_index[pts[:, 1] - j0, pts[:, 0] - i0] = np.arange(self.n_interior)
        self.boundary_index = np.full((H, W), -1, dtype=np.int64)
        self.boundary_index[rows, cols] = np.arange(self.n_boundary)

        # bond masks; a horizontal bond at (row, col) joins grid columns col, col+1
        self.hbond_int = interior[:, :-1] & interior[:, 1:]
        self.vbond_int = interior[:-1, :] & interior[1:, :]
        self.hbond_cross = (interior[:, :-1] & boundary[:, 1:]) | (boundary[:, :-1] & interior[:, 1:])
        self.vbond_cross = (interior[:-1, :] & boundary[1:, :]) | (boundary[:-1, :] & interior[1:, :])
        self.hbond_bdry = boundary[:, :-1] & boundary[:, 1:]
        self.vbond_bdry = boundary[:-1, :] & boundary[1:, :]
        self.n_interior_bonds = int(self.hbond_int.sum() + self.vbond_int.sum())
        self.n_crossing_bonds = int(self.hbond_cross.sum() + self.vbond_cross.sum())

        self.diameter = self._diameter(pts)
        self._depth = None

    def _build_empty(self):
        self.origin = (0, 0)
        self.grid_shape = (1, 1)
        self.interior_mask = np.zeros((1, 1), dtype=bool)
        self.boundary_mask = np.zeros((1, 1), dtype=bool)
        self.boundary_sites = np.zeros((0, 2), dtype=np.int64)
        self.n_boundary = 0
        self.site_index = np.full((1, 1), -1, dtype=np.int64)
        self.boundary_index = np.full((1, 1), -1, dtype=np.int64)
        self.hbond_int = np.zeros((1, 0), dtype=bool)
        self.vbond_int = np.zeros((0, 1), dtype=bool)
        self.hbond_cross = np.zeros((1, 0), dtype=bool)
        self.vbond_cross = np.zeros((0, 1), dtype=bool)
        self.hbond_bdry = np.zeros((1, 0), dtype=bool)
        self.vbond_bdry = np.zeros((0, 1), dtype=bool)
        self.n_interior_bonds = 0
        self.n_crossing_bonds = 0
        self.connected = True
        self.diameter = 1
        self._depth = None

    @staticmethod
    def _diameter(pts: np.ndarray) -> int:
        if len(pts) <= 1:
            return 1
        p = pts.astype(float)
        if len(p) > 400:
            # the max-distance pair lies on the convex hull
            from scipy.spatial import ConvexHull

            p = p[ConvexHull(p).vertices]
        d2 = ((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=2)
        return max(1, int(np.ceil(np.sqrt(d2.max()))))

    # -- queries -----------------------------------------------------------

    @property
    def is_empty(self) -> bool:
        return self.n_interior == 0

    def grid_pos(self, site: Site) -> tuple[int, int]:
        return (site[1] - self.origin[1], site[0] - self.origin[0])

    def contains(self, site: Site) -> bool:
        r, c = self.grid_pos(site)
        H, W = self.grid_shape
        return 0 <= r < H and 0 <= c < W and bool(self.interior_mask[r, c])

    def is_boundary(self, site: Site) -> bool:
        r, c = self.grid_pos(site)
        H, W = self.grid_shape
        return 0 <= r < H and 0 <= c < W and bool(self.boundary_mask[r, c])

    def index_of(self, site: Site) -> int:
        if not self.contains(site):
            raise DomainError(f"{site} is not an interior site")
        r, c = self.grid_pos(site)
        return int(self.site_index[r, c])

    def interior_bonds(self) -> Iterator[Bond]:
        """Canonical (+e1/+e2 oriented) bonds with both endpoints in D."""
        i0, j0 = self.origin
        for r, c in zip(*np.nonzero(self.hbond_int)):
            yield Bond((c + i0, r + j0), (c + i0 + 1, r + j0))
        for r, c in zip(*np.nonzero(self.vbond_int)):
            yield Bond((c + i0, r + j0), (c + i0, r + j0 + 1))

    def crossing_bonds(self) -> Iterator[Bond]:
        """Canonical bonds with one endpoint in D and one in the boundary."""
        i0, j0 = self.origin
        for r, c in zip(*np.nonzero(self.hbond_cross)):
            yield Bond((c + i0, r + j0), (c + i0 + 1, r + j0))
        for r, c in zip(*np.nonzero(self.vbond_cross)):
            yield Bond((c + i0, r + j0), (c + i0, r + j0 + 1))

    def boundary_boundary_bonds(self) -> Iterator[Bond]:
        """Canonical bonds with both endpoints in the boundary ring.

        Stored for completeness; no implemented quantity sums over them (the
        field gradient is undefined across them during the dynamics).
        """
        i0, j0 = self.origin
        for r, c in zip(*np.nonzero(self.hbond_bdry)):
            yield Bond((c + i0, r + j0), (c + i0 + 1, r + j0))
        for r, c in zip(*np.nonzero(self.vbond_bdry)):
            yield Bond((c + i0, r + j0), (c + i0, r + j0 + 1))

    def neighbors(self, site: Site) -> list[Site]:
        i, j = site
        return [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]

    # -- fields <-> grids ---------------------------------------------------

    def to_grid(self, interior_values=None, boundary_values=None, fill: float = 0.0) -> np.ndarray:
        """Dense (H, W) grid of h-vee-phi: interior values where D, boundary
        values on the ring, `fill` elsewhere."""
        g = np.full(self.grid_shape, float(fill))
        if interior_values is not None and self.n_interior:
            vals = np.asarray(interior_values, dtype=float)
            if vals.shape != (self.n_interior,):
                raise DomainError(f"expected {self.n_interior} interior values, got shape {vals.shape}")
            g[self.interior_mask] = self._row_major(vals, self.interior_sites)
        if boundary_values is not None and self.n_boundary:
            bvals = np.asarray(boundary_values, dtype=float)
            if bvals.shape != (self.n_boundary,):
                raise DomainError(f"expected {self.n_boundary} boundary values, got shape {bvals.shape}")
            g[self.boundary_mask] = bvals
        return g

    def _row_major(self, vals: np.ndarray, sites: np.ndarray) -> np.ndarray:
        # sites are already stored row-major, so mask assignment order matches
        return vals

    def interior_from_grid(self, grid: np.ndarray) -> np.ndarray:
        return grid[self.interior_mask].copy()

    def boundary_from_grid(self, grid: np.ndarray) -> np.ndarray:
        return grid[self.boundary_mask].copy()

    def field_dict(self, interior_values, boundary_values=None) -> dict[Site, float]:
        out = {}
        for k, (i, j) in enumerate(self.interior_sites):
            out[(int(i), int(j))] = float(interior_values[k])
        if boundary_values is not None:
            for k, (i, j) in enumerate(self.boundary_sites):
                out[(int(i), int(j))] = float(boundary_values[k])
        return out

    # -- depth, inner regions, annuli ---------------------------------------

    def boundary_depth(self) -> np.ndarray:
        """Per-interior-site depth: Euclidean distance to the nearest boundary
        site, minus one (adjacent ring has depth 0)."""
        if self._depth is None:
            if self.is_empty:
                self._depth = np.zeros(0)
            else:
                tree = cKDTree(self.boundary_sites.astype(float))

                d, _ = tree.query(self.interior_sites.astype(float))
                self._depth = d - 1.0
        return self._depth


def build_rectangle(width: int, height: int) -> LatticeDomain:
    """Rectangle domain with interior {0..width-1} x {0..height-1}."""
    if width < 1 or height < 1:
        raise DomainError(f"rectangle dimensions must be >= 1, got {width}x{height}")
    ii, jj = np.meshgrid(np.arange(width), np.arange(height), indexing="ij")
    return LatticeDomain(zip(ii.ravel().tolist(), jj.ravel().tolist()))


def build_disk(radius: float) -> LatticeDomain:
    """Disk domain: all sites within Euclidean distance `radius` of the origin."""
    if radius < 1:
        raise DomainError(f"disk radius must be >= 1, got {radius}")
    n = int(np.floor(radius))
    sites = [
        (i, j)
        for i in range(-n, n + 1)
        for j in range(-n, n + 1)
        if i * i + j * j <= radius * radius
    ]
    return LatticeDomain(sites)


def build_from_mask(text: str) -> LatticeDomain:
    """Domain from a text grid of 0/1 rows (row 0 = smallest j)."""
    rows = [line.strip() for line in text.strip().splitlines() if line.strip()]
    sites = []
    for j, row in enumerate(rows):
        for i, ch in enumerate(row.replace(" ", "")):
            if ch == "1":
                sites.append((i, j))
            elif ch != "0":
                raise DomainError(f"mask rows must contain only 0/1, got {ch!r}")
    if not sites:
        raise DomainError("mask contains no interior sites")
    return LatticeDomain(sites)


def inner_region(domain: LatticeDomain, r: float) -> LatticeDomain:
    """D(r): interior sites at depth >= r, as a domain with its own boundary.

    May be empty (returned as an empty domain, not an error) and, for contorted
    domains, disconnected; `connected` records which.
    """
    if r < 0:
        raise DomainError(f"inner-region radius must be >= 0, got {r}")
    if r == 0:
        return domain
    keep = domain.boundary_depth() >= r
    sites = domain.interior_sites[keep]
    return LatticeDomain(map(tuple, sites), allow_disconnected=True)


def annulus(domain: LatticeDomain, r1: float, r2: float) -> set[Site]:
    """Half-open annulus {x in D : r1 <= depth(x) < r2}."""
    if not (0 <= r1 < r2):
        raise DomainError(f"annulus needs 0 <= r1 < r2, got r1={r1}, r2={r2}")
    depth = domain.boundary_depth()
    keep = (depth >= r1) & (depth < r2)
    return {(int(i), int(j)) for i, j in domain.interior_sites[keep]}


def gradient(field: Mapping[Site, float], bond: Bond) -> float:
    """Discrete gradient across an oriented bond: field(head) - field(tail)."""
    try:
        return float(field[bond.head]) - float(field[bond.tail])
    except KeyError as e:
        raise DomainError(f"field has no value at bond endpoint {e.args[0]}") from e


class TorusDomain:
    """Periodic n x n torus; every site has degree 4 and there are 2n^2 bonds."""

    def __init__(self, side: int):
        if side < 2:
            raise DomainError(f"torus side must be >= 2, got {side}")
        self.side = int(side)

    @property
    def n_sites(self) -> int:
        return self.side * self.side

    @property
    def n_bonds(self) -> int:
        return 2 * self.side * self.side

    # grids are indexed [row=j, col=i]; gradients wrap periodically
    def grad_horizontal(self, h: np.ndarray) -> np.ndarray:
        return np.roll(h, -1, axis=1) - h

    def grad_vertical(self, h: np.ndarray) -> np.ndarray:
        return np.roll(h, -1, axis=0) - h
