"""Reference elements on [0,1]^2, Gauss rules, bilinear cell geometry, DoF maps."""
import enum
from dataclasses import dataclass

import numpy as np


class ElementKind(enum.Enum):
    Q1 = "Q1"
    Q1PlusBubble = "Q1+B"
    P0 = "P0"

    @property
    def n_local(self):
        return {"Q1": 4, "Q1+B": 5, "P0": 1}[self.value]

    @property
    def has_bubble(self):
        return self is ElementKind.Q1PlusBubble


_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _split(ref_points):
    p = np.asarray(ref_points, dtype=float)
    return p[..., 0], p[..., 1]


def _q1_values(xi, eta):
    return np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta,
                     (1 - xi) * eta], axis=-1)


def _q1_grads(xi, eta):
    gx = np.stack([-(1 - eta), 1 - eta, eta, -eta], axis=-1)
    gy = np.stack([-(1 - xi), -xi, xi, 1 - xi], axis=-1)
    return np.stack([gx, gy], axis=-1)


def _bubble(xi, eta):
    return 16.0 * xi * (1 - xi) * eta * (1 - eta)


def _bubble_grad(xi, eta):
    return np.stack([16.0 * (1 - 2 * xi) * eta * (1 - eta),
                     16.0 * xi * (1 - xi) * (1 - 2 * eta)], axis=-1)


def shape_values(element, ref_points):
    """All local shape values, shape ``(..., n_local)``."""
    xi, eta = _split(ref_points)
    if element is ElementKind.P0:
        return np.ones(np.shape(xi) + (1,))
    vals = _q1_values(xi, eta)
    if element is ElementKind.Q1PlusBubble:
        vals = np.concatenate([vals, _bubble(xi, eta)[..., None]], axis=-1)
    return vals


def shape_gradients(element, ref_points):
    """Reference gradients, shape ``(..., n_local, 2)``."""
    xi, eta = _split(ref_points)
    if element is ElementKind.P0:
        return np.zeros(np.shape(xi) + (1, 2))
    g = _q1_grads(xi, eta)
    if element is ElementKind.Q1PlusBubble:
        g = np.concatenate([g, _bubble_grad(xi, eta)[..., None, :]], axis=-2)
    return g


def _check_dof(element, local_dof):
    if not 0 <= local_dof < element.n_local:
        raise ValueError(f"local dof {local_dof} invalid for {element.value}")


def shape_value(element, local_dof, ref_point):
    _check_dof(element, local_dof)
    return float(shape_values(element, ref_point)[local_dof])


def shape_gradient(element, local_dof, ref_point):
    _check_dof(element, local_dof)
    return shape_gradients(element, ref_point)[local_dof]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


def gauss_rule(order):
    """Tensor Gauss-Legendre rule with ``order`` points per direction on [0,1]^2."""
    if order not in range(1, 6):
        raise ValueError(f"unsupported quadrature order {order}")
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return QuadratureRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel())


# ------------------------------------------------------------ geometry


def map_points(corners, ref_points):
    """Bilinear map of reference points into every cell.

    ``corners`` is ``(n_cells, 4, 2)``; returns ``(n_cells, n_points, 2)``.
    """
    N = _q1_values(*_split(ref_points))
    return np.einsum("qa,cad->cqd", N, corners)


def jacobians(corners, ref_points):
    """``J[c, q] = d(x, y) / d(xi, eta)``, shape ``(n_cells, n_points, 2, 2)``."""
    G = _q1_grads(*_split(ref_points))
    return np.einsum("qar,cad->cqdr", G, corners)


@dataclass(frozen=True, eq=False)
class CellValues:
    """Shape data of one element at one rule on every cell of a level."""

    values: np.ndarray     # (q, n_local)
    grads: np.ndarray      # (cells, q, n_local, 2), physical
    jxw: np.ndarray        # (cells, q)
    points: np.ndarray     # (cells, q, 2)


def cell_values(level, element, rule):
    corners = level.cell_coords()
    J = jacobians(corners, rule.points)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        raise ValueError("non-positive Jacobian determinant in mesh")
    Jinv = np.linalg.inv(J)
    ref_grads = shape_gradients(element, rule.points)
    # grad_phys = J^{-T} grad_ref
    grads = np.einsum("cqrd,qar->cqad", Jinv, ref_grads)
    return CellValues(shape_values(element, rule.points), grads,
                      det * rule.weights, map_points(corners, rule.points))


# ------------------------------------------------------------ DoFs


@dataclass(frozen=True, eq=False)
class FeSpace:
    element: ElementKind
    hierarchy: object
    level_index: int
    dof_map: np.ndarray
    n_dofs: int
    boundary_dofs: np.ndarray

    @property
    def level(self):
        return self.hierarchy.level(self.level_index)

    @property
    def n_vertex_dofs(self):
        return 0 if self.element is ElementKind.P0 else self.level.n_vertices

    def free_mask(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return mask


def enumerate_dofs(hierarchy, level_index, element, boundary_predicate=None):
    """Global numbering: vertex DoFs in vertex order, then bubbles in cell order.

    ``boundary_predicate`` takes the mesh level and returns a vertex mask;
    ``None`` means no constrained DoFs.
    """
    level = hierarchy.level(level_index)
    nc, nv = level.n_cells, level.n_vertices
    if element is ElementKind.P0:
        dof_map = np.arange(nc).reshape(nc, 1)
        n_dofs = nc
    elif element is ElementKind.Q1:
        dof_map = level.cells.copy()
        n_dofs = nv
    else:
        dof_map = np.column_stack([level.cells, nv + np.arange(nc)])
        n_dofs = nv + nc
    boundary = np.array([], dtype=np.int64)
    if boundary_predicate is not None and element is not ElementKind.P0:
        boundary = np.flatnonzero(boundary_predicate(level))
    return FeSpace(element, hierarchy, level_index, dof_map, n_dofs, boundary)


def on_mesh_boundary(level):
    return level.boundary_vertex_flags
