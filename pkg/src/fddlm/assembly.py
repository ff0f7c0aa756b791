"""Assembly of the FD-DLM block system.

The full matrix is laid out as::

    [ A1   0    C1^T ] [u  ]   [F1]
    [ 0    A2  -C2^T ] [u2 ] = [F2]
    [ C1  -C2   0    ] [lam]   [0 ]

with ``A1`` on the background square (homogeneous Dirichlet data, removed by
symmetric elimination), ``A2`` and ``C2`` on the immersed disk, and ``C1``
coupling disk multipliers to background Q1 functions through point location.
"""
import enum
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from fddlm import mesh as _mesh
from fddlm.elements import (ElementKind, cell_values, enumerate_dofs,
                            gauss_rule, on_mesh_boundary, _q1_grads, _q1_values)
from fddlm.linalg import csr, write_matrix_market


class CouplingMode(enum.Enum):
    L2 = "L2"
    H1 = "H1"


class ElementChoice(enum.Enum):
    Element1 = 1   # Q1 - Q1 - Q1
    Element2 = 2   # Q1 - (Q1+B) - P0

    @property
    def v2_element(self):
        return ElementKind.Q1 if self is ElementChoice.Element1 else ElementKind.Q1PlusBubble

    @property
    def lambda_element(self):
        return ElementKind.Q1 if self is ElementChoice.Element1 else ElementKind.P0


class UnsupportedPairingError(ValueError):
    """P0 multipliers are not in H^1, so they cannot use H^1 coupling."""


class WellPosednessWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ProblemConfig:
    beta: float = 1.0
    beta2: float = 10.0
    f: float = 1.0
    f2: float = 1.0
    coupling_mode: CouplingMode = CouplingMode.L2
    element_choice: ElementChoice = ElementChoice.Element1
    half_width: float = 1.4
    radius: float = 1.0
    allow_beta2_le_beta: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.beta2 > self.beta:
            msg = (f"beta2={self.beta2} <= beta={self.beta}: the discrete "
                   "problem is only known to be well posed for beta2 > beta")
            if not self.allow_beta2_le_beta:
                raise ValueError(msg + " (set allow_beta2_le_beta to override)")
            warnings.warn(msg, WellPosednessWarning, stacklevel=3)
        if (self.element_choice is ElementChoice.Element2
                and self.coupling_mode is CouplingMode.H1):
            raise UnsupportedPairingError("Element2 uses P0 multipliers; H1 "
                                          "coupling needs a continuous space")
        if self.radius >= self.half_width:
            raise ValueError("the immersed disk must lie strictly inside the square")


def _default_order(*elements):
    return 3 if any(e.has_bubble for e in elements) else 2


def _scatter(row_map, col_map, local, shape):
    nr, nc = row_map.shape[1], col_map.shape[1]
    rows = np.broadcast_to(row_map[:, :, None], local.shape)
    cols = np.broadcast_to(col_map[:, None, :], local.shape)
    assert local.shape[1:] == (nr, nc)
    M = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
    return csr(M)


def assemble_stiffness(space, coefficient, order=None):
    """``coefficient * (grad phi_j, grad phi_i)`` over the space's mesh level."""
    rule = gauss_rule(order or _default_order(space.element))
    cv = cell_values(space.level, space.element, rule)
    local = np.einsum("cq,cqad,cqbd->cab", cv.jxw, cv.grads, cv.grads)
    return _scatter(space.dof_map, space.dof_map, coefficient * local,
                    (space.n_dofs, space.n_dofs))


def assemble_mass(row_space, col_space, order=None, with_gradients=False):
    """``(phi_j, psi_i)`` (plus gradient term) for two spaces on one mesh level."""
    if row_space.level is not col_space.level:
        raise ValueError("both spaces must live on the same mesh level")
    rule = gauss_rule(order or _default_order(row_space.element, col_space.element))
    level = row_space.level
    rv = cell_values(level, row_space.element, rule)
    cv = cell_values(level, col_space.element, rule)
    local = np.einsum("cq,qa,qb->cab", rv.jxw, rv.values, cv.values)
    if with_gradients:
        local = local + np.einsum("cq,cqad,cqbd->cab", rv.jxw, rv.grads, cv.grads)
    return _scatter(row_space.dof_map, col_space.dof_map, local,
                    (row_space.n_dofs, col_space.n_dofs))


def _check_mode(lambda_space, mode):
    mode = CouplingMode(mode)
    if mode is CouplingMode.H1 and lambda_space.element is ElementKind.P0:
        raise UnsupportedPairingError("H1 coupling is applicable only with "
                                      "continuous multiplier spaces")
    return mode


def assemble_C2(lambda_space, v2_space, mode):
    mode = _check_mode(lambda_space, mode)
    return assemble_mass(lambda_space, v2_space,
                         with_gradients=mode is CouplingMode.H1)


def assemble_C1(lambda_space, v_space, mode, order=3):
    """Coupling of disk multipliers with background Q1 functions.

    Quadrature runs over the disk cells; each physical quadrature point is
    located in the background mesh and the background shape functions are
    evaluated there.
    """
    mode = _check_mode(lambda_space, mode)
    if v_space.element is not ElementKind.Q1:
        raise ValueError("background space must be Q1")
    bg = v_space.hierarchy
    rule = gauss_rule(order)
    lv = cell_values(lambda_space.level, lambda_space.element, rule)
    nc, nq = lv.jxw.shape
    try:
        cell, ref = _mesh.locate_point(bg, v_space.level_index,
                                       lv.points.reshape(-1, 2))
    except _mesh.OutOfDomainError as exc:
        raise _mesh.OutOfDomainError(
            f"coupling quadrature point outside the background mesh: {exc}") from None
    phi = _q1_values(ref[:, 0], ref[:, 1]).reshape(nc, nq, 4)
    cols = v_space.dof_map[cell].reshape(nc, nq, 4)
    local = np.einsum("cq,qa,cqb->cqab", lv.jxw, lv.values, phi)
    if mode is CouplingMode.H1:
        h = bg.mesh_size(v_space.level_index)
        dphi = _q1_grads(ref[:, 0], ref[:, 1]).reshape(nc, nq, 4, 2) / h
        local = local + np.einsum("cq,cqad,cqbd->cqab", lv.jxw, lv.grads, dphi)
    nl = lambda_space.element.n_local
    rows = np.broadcast_to(lambda_space.dof_map[:, None, :, None], local.shape)
    cols = np.broadcast_to(cols[:, :, None, :], (nc, nq, nl, 4))
    M = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(lambda_space.n_dofs, v_space.n_dofs))
    return csr(M)


def apply_dirichlet(matrix, rhs, boundary_dofs, values=None):
    """Symmetric elimination of prescribed DoFs.

    Rows and columns of ``boundary_dofs`` are zeroed, the diagonal set to 1
    and the right-hand side set to the prescribed values, after moving the
    eliminated column contributions to the right-hand side.
    """
    A = csr(matrix)
    b = np.array(rhs, dtype=float)
    bd = np.asarray(boundary_dofs, dtype=np.int64)
    if bd.size == 0:
        return A, b
    g = np.zeros(A.shape[0])
    if values is not None:
        g[bd] = values
    b -= A @ g
    keep = np.ones(A.shape[0])
    keep[bd] = 0.0
    D = sp.diags(keep)
    A = D @ A @ D + sp.diags(1.0 - keep)
    A = csr(A)
    A.eliminate_zeros()
    b[bd] = g[bd]
    return A, b


def eliminate_columns(matrix, dofs):
    keep = np.ones(matrix.shape[1])
    keep[np.asarray(dofs, dtype=np.int64)] = 0.0
    M = csr(matrix @ sp.diags(keep))
    M.eliminate_zeros()
    return M


def load_vector(space, value, order=None):
    rule = gauss_rule(order or _default_order(space.element))
    cv = cell_values(space.level, space.element, rule)
    local = value * np.einsum("cq,qa->ca", cv.jxw, cv.values)
    return np.bincount(space.dof_map.ravel(), local.ravel(), minlength=space.n_dofs)


def assemble_rhs(config, spaces):
    """``F1 = f * int phi`` on the square (boundary zeroed) and
    ``F2 = (f2 - f) * int phi`` on the disk."""
    v_space, v2_space = spaces[0], spaces[1]
    F1 = load_vector(v_space, config.f)
    F1[v_space.boundary_dofs] = 0.0
    F2 = load_vector(v2_space, config.f2 - config.f)
    return F1, F2


@dataclass(frozen=True, eq=False)
class BlockSystem:
    A1: sp.csr_matrix
    A2: sp.csr_matrix
    C1: sp.csr_matrix
    C2: sp.csr_matrix
    F1: np.ndarray
    F2: np.ndarray
    coupling_mode: CouplingMode
    spaces: tuple
    config: ProblemConfig = None

    @property
    def sizes(self):
        return self.A1.shape[0], self.A2.shape[0], self.C2.shape[0]

    @property
    def n(self):
        return sum(self.sizes)

    def B(self):
        return csr(sp.bmat([[self.A2, -self.C2.T], [-self.C2, None]]))

    def matrix(self):
        return csr(sp.bmat([[self.A1, None, self.C1.T],
                            [None, self.A2, -self.C2.T],
                            [self.C1, -self.C2, None]]))

    def rhs(self):
        return np.concatenate([self.F1, self.F2, np.zeros(self.C2.shape[0])])

    def split(self, x):
        n1, n2, _ = self.sizes
        return x[:n1], x[n1:n1 + n2], x[n1 + n2:]

    def export(self, directory):
        """Write every block as ``<name>.mtx`` under ``directory``."""
        from pathlib import Path
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in ("A1", "A2", "C1", "C2"):
            write_matrix_market(d / f"{name}.mtx", getattr(self, name))
        write_matrix_market(d / "A.mtx", self.matrix())


def make_spaces(config, background, disk, background_level, disk_level):
    ec = config.element_choice
    v = enumerate_dofs(background, background_level, ElementKind.Q1, on_mesh_boundary)
    v2 = enumerate_dofs(disk, disk_level, ec.v2_element)
    lam = enumerate_dofs(disk, disk_level, ec.lambda_element)
    return v, v2, lam


def assemble_system(config, background_level, disk_level, background=None, disk=None):
    """Assemble every block for the given background and disk mesh levels.

    Hierarchies are built on demand; pass them in to share meshes between
    levels (the multigrid setup does this).
    """
    if background is None:
        background = _mesh.build_square_hierarchy(config.half_width, background_level)
    if disk is None:
        disk = _mesh.build_disk_hierarchy(config.radius, disk_level)
    v, v2, lam = make_spaces(config, background, disk, background_level, disk_level)
    mode = config.coupling_mode

    A1 = assemble_stiffness(v, config.beta)
    A2 = assemble_stiffness(v2, config.beta2 - config.beta)
    C2 = assemble_C2(lam, v2, mode)
    C1 = assemble_C1(lam, v, mode)
    F1, F2 = assemble_rhs(config, (v, v2, lam))

    A1, F1 = apply_dirichlet(A1, F1, v.boundary_dofs)
    C1 = eliminate_columns(C1, v.boundary_dofs)
    return BlockSystem(A1, A2, C1, C2, F1, F2, mode, (v, v2, lam), config)
