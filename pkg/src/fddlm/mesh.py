"""Nested quadrilateral mesh hierarchies for the background square and the disk.

Cells are stored as ``(n_cells, 4)`` vertex-index arrays in counterclockwise
order, matching the reference-cell corners ``(0,0), (1,0), (1,1), (0,1)``.
"""
from dataclasses import dataclass, field

import numpy as np


class OutOfDomainError(ValueError):
    """A point does not lie in the meshed domain."""


@dataclass(frozen=True)
class Square:
    half_width: float


@dataclass(frozen=True)
class Disk:
    radius: float


@dataclass(frozen=True, eq=False)
class MeshLevel:
    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertex_flags: np.ndarray
    parent_cell_map: np.ndarray | None = None
    # position (0..3) of each cell inside its parent, counterclockwise from
    # the parent's first corner
    child_slot: np.ndarray | None = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    def cell_coords(self):
        """Corner coordinates, shape ``(n_cells, 4, 2)``."""
        return self.vertices[self.cells]


@dataclass(frozen=True, eq=False)
class MeshHierarchy:
    levels: list = field(default_factory=list)
    domain_kind: Square | Disk | None = None

    def __len__(self):
        return len(self.levels)

    def level(self, k):
        """Level ``k`` counted from 1 (coarsest)."""
        if not 1 <= k <= len(self.levels):
            raise IndexError(f"level {k} not in 1..{len(self.levels)}")
        return self.levels[k - 1]

    @property
    def finest(self):
        return self.levels[-1]

    def cells_per_side(self, k):
        """Cells along one side of a Square level."""
        return 2 ** (k - 1)

    def mesh_size(self, k):
        if isinstance(self.domain_kind, Square):
            return 2.0 * self.domain_kind.half_width / self.cells_per_side(k)
        corners = self.level(k).cell_coords()
        edges = np.roll(corners, -1, axis=1) - corners
        return float(np.max(np.linalg.norm(edges, axis=2)))


def _check_levels(n_levels):
    if n_levels < 1:
        raise ValueError(f"n_levels must be >= 1, got {n_levels}")


def _square_level(half_width, n):
    t = np.linspace(-half_width, half_width, n + 1)
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v0 = j * (n + 1) + i
    cells = np.column_stack([v0, v0 + 1, v0 + n + 2, v0 + n + 1])
    iv, jv = np.meshgrid(np.arange(n + 1), np.arange(n + 1))
    boundary = ((iv == 0) | (iv == n) | (jv == 0) | (jv == n)).ravel()
    parent = slot = None
    if n > 1:
        parent = (j // 2) * (n // 2) + i // 2
        slot = np.array([[0, 3], [1, 2]])[i % 2, j % 2]
    return MeshLevel(vertices, cells, boundary, parent, slot)


def build_square_hierarchy(half_width, n_levels):
    """Uniformly refined meshes of ``[-half_width, half_width]^2``.

    Level ``k`` is a structured ``2^(k-1) x 2^(k-1)`` grid; vertices and cells
    are numbered row by row from the lower-left corner.
    """
    _check_levels(n_levels)
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    levels = [_square_level(float(half_width), 2 ** k) for k in range(n_levels)]
    return MeshHierarchy(levels, Square(float(half_width)))


def _disk_coarse(radius):
    s = radius * 0.7 / np.sqrt(2.0) / np.sqrt(2.0)
    c = radius / np.sqrt(2.0)
    vertices = np.array([
        [-s, -s], [s, -s], [s, s], [-s, s],
        [-c, -c], [c, -c], [c, c], [-c, c],
    ])
    cells = np.array([
        [0, 1, 2, 3],
        [4, 5, 1, 0],
        [1, 5, 6, 2],
        [3, 2, 6, 7],
        [4, 0, 3, 7],
    ])
    boundary = np.zeros(8, dtype=bool)
    boundary[4:] = True
    return MeshLevel(vertices, cells, boundary, None)


def refine_quads(level, project=None):
    """Split every cell into four children.

    New vertices are appended after the existing ones: first one per edge
    (edge midpoint), then one per cell (mean of the corners).  Midpoints of
    boundary edges are passed through ``project`` when given.  Children of
    cell ``c`` are cells ``4c .. 4c+3``, each keeping corner ``c[a]``.
    """
    cells = level.cells
    nv = level.n_vertices
    nc = level.n_cells
    local_edges = cells[:, [0, 1, 1, 2, 2, 3, 3, 0]].reshape(nc, 4, 2)
    keys = np.sort(local_edges.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                       return_counts=True)
    inverse = inverse.reshape(nc, 4)
    ne = len(edges)

    mids = 0.5 * (level.vertices[edges[:, 0]] + level.vertices[edges[:, 1]])
    on_boundary_edge = counts == 1
    if project is not None:
        mids[on_boundary_edge] = project(mids[on_boundary_edge])
    centers = level.cell_coords().mean(axis=1)
    vertices = np.vstack([level.vertices, mids, centers])

    boundary = np.concatenate([level.boundary_vertex_flags, on_boundary_edge,
                               np.zeros(nc, dtype=bool)])

    m = nv + inverse  # m[:, e] is the midpoint of local edge e = (a, a+1)
    ctr = nv + ne + np.arange(nc)
    v = cells
    children = np.stack([
        np.column_stack([v[:, 0], m[:, 0], ctr, m[:, 3]]),
        np.column_stack([m[:, 0], v[:, 1], m[:, 1], ctr]),
        np.column_stack([ctr, m[:, 1], v[:, 2], m[:, 2]]),
        np.column_stack([m[:, 3], ctr, m[:, 2], v[:, 3]]),
    ], axis=1).reshape(-1, 4)
    parent = np.repeat(np.arange(nc), 4)
    slot = np.tile(np.arange(4), nc)
    return MeshLevel(vertices, children, boundary, parent, slot)


def build_disk_hierarchy(radius, n_levels):
    """Nested quadrilateral meshes of the disk of given radius about the origin.

    The coarsest mesh has five cells: a centre square with corners at
    distance ``0.7 * radius / sqrt(2)`` from the origin, surrounded by four
    quads whose outer corners lie on the circle.  On refinement new
    boundary vertices are pushed radially onto the circle.
    """
    _check_levels(n_levels)
    if radius <= 0:
        raise ValueError("radius must be positive")
    radius = float(radius)

    def project(p):
        return radius * p / np.linalg.norm(p, axis=1, keepdims=True)

    levels = [_disk_coarse(radius)]
    for _ in range(n_levels - 1):
        levels.append(refine_quads(levels[-1], project))
    return MeshHierarchy(levels, Disk(radius))


def locate_point(hierarchy, level, p):
    """Background cell containing ``p`` and its reference coordinates.

    ``p`` may be a single point or an ``(m, 2)`` array.  Points on a shared
    edge or vertex go to the cell with the smallest index.
    """
    if not isinstance(hierarchy.domain_kind, Square):
        raise TypeError("point location needs a Square hierarchy")
    hw = hierarchy.domain_kind.half_width
    n = hierarchy.cells_per_side(level)
    h = 2.0 * hw / n
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if np.any(np.abs(pts) > hw):
        bad = pts[np.any(np.abs(pts) > hw, axis=1)][0]
        raise OutOfDomainError(f"point {tuple(bad)} outside [-{hw}, {hw}]^2")
    t = (pts + hw) / h
    ij = np.clip(np.ceil(t).astype(np.int64) - 1, 0, n - 1)
    ref = t - ij
    cell = ij[:, 1] * n + ij[:, 0]
    if single:
        return int(cell[0]), ref[0]
    return cell, ref


def write_level(level, path):
    """Plain-text dump: ``x y`` per vertex, then ``v0 v1 v2 v3`` per cell."""
    with open(path, "w") as fh:
        for x, y in level.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for c in level.cells:
            fh.write(" ".join(str(int(v)) for v in c) + "\n")


def read_level(path):
    verts, cells = [], []
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if len(tok) == 2:
                verts.append([float(t) for t in tok])
            elif len(tok) == 4:
                cells.append([int(t) for t in tok])
    return np.array(verts), np.array(cells, dtype=np.int64)
