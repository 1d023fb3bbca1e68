"""Planar point grids and distance matrices.

Coordinates are kilometres on a local plane. Geographic (lon/lat) inputs must
be projected before they reach this module.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

DUPLICATE_TOL_KM = 1e-9


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered set of 2-D locations.

    Point order defines the row/column order of every matrix built from the
    grid. ``ids`` label the points (defaults to ``"<id>-<index>"``).
    """

    points: np.ndarray
    id: str = "grid"
    ids: tuple = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidArgument(f"grid points must have shape (n, 2), got {pts.shape}")
        if len(pts) == 0:
            raise InvalidArgument(f"grid {self.id!r} is empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgument(f"grid {self.id!r} has non-finite coordinates")
        if len(pts) > 1:
            d = _distances(pts, pts)
            np.fill_diagonal(d, np.inf)
            i, j = np.unravel_index(np.argmin(d), d.shape)
            if d[i, j] <= DUPLICATE_TOL_KM:
                raise InvalidArgument(f"grid {self.id!r} has duplicate points at indices {min(i, j)} and {max(i, j)}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        ids = self.ids
        if ids is None:
            ids = tuple(f"{self.id}-{i}" for i in range(len(pts)))
        ids = tuple(str(s) for s in ids)
        if len(ids) != len(pts):
            raise InvalidArgument("number of point ids does not match number of points")
        if len(set(ids)) != len(ids):
            raise InvalidArgument(f"grid {self.id!r} has duplicate point ids")
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.points)

    def same_points(self, other, tol=DUPLICATE_TOL_KM):
        return self.points.shape == other.points.shape and bool(
            np.all(np.abs(self.points - other.points) <= tol))

    @property
    def centroid(self):
        return self.points.mean(axis=0)


def make_regular_grid(origin, spacing, nx, ny, id="grid"):
    """Regular lattice of ``nx * ny`` points in row-major order.

    Point ``(i, j)`` sits at ``origin + (i * spacing, j * spacing)``; ``i``
    varies fastest.
    """
    if not spacing > 0:
        raise InvalidArgument(f"spacing must be positive, got {spacing}")
    if int(nx) < 1 or int(ny) < 1:
        raise InvalidArgument(f"grid counts must be >= 1, got nx={nx}, ny={ny}")
    ox, oy = origin
    jj, ii = np.meshgrid(np.arange(int(ny)), np.arange(int(nx)), indexing="ij")
    pts = np.column_stack([ox + ii.ravel() * spacing, oy + jj.ravel() * spacing])
    return Grid(pts, id=id)


def transform_grid(g, rotation=0.0, offset=(0.0, 0.0), id=None):
    """Rotate ``g`` about its centroid by ``rotation`` radians, then translate."""
    c = g.centroid
    cs, sn = np.cos(rotation), np.sin(rotation)
    rot = np.array([[cs, -sn], [sn, cs]])
    pts = (g.points - c) @ rot.T + c + np.asarray(offset, dtype=float)
    return Grid(pts, id=g.id if id is None else id, ids=g.ids)


def _distances(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def pairwise_distances(a, b):
    """Euclidean distances (km) between the points of grids ``a`` and ``b``."""
    if len(a) == 0 or len(b) == 0:
        raise InvalidArgument("pairwise_distances needs nonempty grids")
    d = _distances(a.points, b.points)
    if a is b:
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
    return d
