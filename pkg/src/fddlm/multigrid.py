"""Geometric multigrid: transfers, SOR and Vanka smoothers, V-cycles.

Level operators are re-assembled on every mesh level; transfers are
built from the refinement topology, so a fine DoF value is always the
corresponding fine DoF functional applied to the coarse function written in
the parent cell's reference coordinates.
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from fddlm import kernels, mesh as _mesh
from fddlm.elements import ElementKind, shape_values
from fddlm.linalg import Factorization, SingularMatrixError, csr

log = logging.getLogger(__name__)


class SmootherInapplicableError(ValueError):
    """Point smoothers need a nonzero diagonal."""


class SingularPatchError(np.linalg.LinAlgError):
    def __init__(self, multiplier, msg=""):
        super().__init__(f"singular Vanka patch for multiplier dof {multiplier} {msg}")
        self.multiplier = multiplier


# ------------------------------------------------------------ transfers

_CHILD_CORNERS = np.array([
    [[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]],
    [[0.5, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5]],
    [[0.5, 0.5], [1.0, 0.5], [1.0, 1.0], [0.5, 1.0]],
    [[0.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]],
])


def _check_nested(coarse, fine):
    if fine.parent_cell_map is None or fine.n_cells != 4 * coarse.n_cells:
        raise ValueError("fine level is not a uniform refinement of the coarse level")
    counts = np.bincount(fine.parent_cell_map, minlength=coarse.n_cells)
    if np.any(counts != 4):
        raise ValueError("fine level is not a uniform refinement of the coarse level")


def child_corner_refs(coarse, fine):
    """Reference coordinates, inside the parent cell, of every fine-cell corner."""
    _check_nested(coarse, fine)
    return _CHILD_CORNERS[fine.child_slot]


def _dedupe(rows, cols, vals, shape, tol=1e-14):
    keep = np.abs(vals) > tol
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    key = rows.astype(np.int64) * shape[1] + cols
    _, first = np.unique(key, return_index=True)
    return csr(sp.coo_matrix((vals[first], (rows[first], cols[first])), shape=shape))


def prolongation(coarse_space, fine_space):
    """Prolongation matrix ``(fine_dofs, coarse_dofs)`` for one element kind."""
    element = coarse_space.element
    if fine_space.element is not element:
        raise ValueError("element kinds differ between levels")
    coarse, fine = coarse_space.level, fine_space.level
    refs = child_corner_refs(coarse, fine)
    parent = fine.parent_cell_map
    cdofs = coarse_space.dof_map[parent]            # (nf, nloc)
    nf, nloc = cdofs.shape
    rows, cols, vals = [], [], []

    if element is ElementKind.P0:
        return csr(sp.coo_matrix((np.ones(nf), (np.arange(nf), cdofs[:, 0])),
                                 shape=(fine_space.n_dofs, coarse_space.n_dofs)))

    corner_vals = shape_values(element, refs)       # (nf, 4 corners, nloc)
    fdofs = fine_space.dof_map
    for a in range(4):
        rows.append(np.repeat(fdofs[:, a], nloc))
        cols.append(cdofs.ravel())
        vals.append(corner_vals[:, a, :].ravel())
    if element is ElementKind.Q1PlusBubble:
        center = refs.mean(axis=1)
        center_vals = shape_values(element, center)  # (nf, nloc)
        # bubble functional: value at the centre minus the bilinear interpolant
        # of the corner values, which is their mean at the centre
        bubble = center_vals - corner_vals.mean(axis=1)
        rows.append(np.repeat(fdofs[:, 4], nloc))
        cols.append(cdofs.ravel())
        vals.append(bubble.ravel())
    return _dedupe(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                   (fine_space.n_dofs, coarse_space.n_dofs))


@dataclass(frozen=True, eq=False)
class TransferOperator:
    prolongation: sp.csr_matrix

    @property
    def restriction(self):
        return self.prolongation.T.tocsr()

    def prolongate(self, xc):
        return self.prolongation @ xc

    def restrict(self, rf):
        return self.prolongation.T @ rf


def build_q1_transfer(coarse_space, fine_space):
    if coarse_space.element is not ElementKind.Q1:
        raise ValueError("Q1 transfer needs Q1 spaces")
    return TransferOperator(prolongation(coarse_space, fine_space))


def build_mixed_transfer(coarse_spaces, fine_spaces):
    """Block-diagonal transfer over ``(V2, Lambda)`` space pairs."""
    Pv = prolongation(coarse_spaces[0], fine_spaces[0])
    Pl = prolongation(coarse_spaces[1], fine_spaces[1])
    return TransferOperator(csr(sp.block_diag([Pv, Pl])))


def mask_transfer(transfer, fine_fixed, coarse_fixed):
    """Drop prolongation rows/columns of constrained DoFs."""
    P = transfer.prolongation
    rf = np.ones(P.shape[0])
    rf[fine_fixed] = 0.0
    rc = np.ones(P.shape[1])
    rc[coarse_fixed] = 0.0
    M = csr(sp.diags(rf) @ P @ sp.diags(rc))
    M.eliminate_zeros()
    return TransferOperator(M)


# ------------------------------------------------------------ smoothers


def _require_diagonal(A):
    d = A.diagonal()
    bad = np.flatnonzero(d == 0.0)
    if bad.size:
        raise SmootherInapplicableError(
            f"zero diagonal at row {bad[0]} ({bad.size} rows): use a Vanka smoother")


def sor_sweep(A, x, b, omega=1.0, direction="forward"):
    """One relaxed Gauss-Seidel sweep, in place; returns ``x``."""
    _require_diagonal(A)
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    return kernels.sor(A, x, b, omega, backward=direction == "backward")


class SORSmoother:
    """Symmetric passes: a forward sweep followed by a backward sweep.

    A symmetric pass is its own adjoint, so ``transpose`` is ignored.
    """

    def __init__(self, A, omega=1.0):
        _require_diagonal(A)
        self.A = A
        self.omega = omega

    def smooth(self, x, b, steps, transpose=False):
        for _ in range(steps):
            kernels.sor(self.A, x, b, self.omega, backward=False)
            kernels.sor(self.A, x, b, self.omega, backward=True)
        return x


class VankaPatches:
    """Flattened patch DoF lists and dense patch inverses."""

    def __init__(self, sets, inverses, multipliers):
        self.multipliers = np.asarray(multipliers, dtype=np.int64)
        sizes = np.array([len(s) for s in sets], dtype=np.int64)
        self.ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.dofs = np.concatenate(sets).astype(np.int64)
        self.inv_ptr = np.concatenate([[0], np.cumsum(sizes ** 2)]).astype(np.int64)
        self.inv_vals = np.concatenate([m.ravel() for m in inverses])
        self.max_size = int(sizes.max())
        self._rows = None

    @property
    def n_patches(self):
        return len(self.ptr) - 1

    def patch(self, p):
        return self.dofs[self.ptr[p]:self.ptr[p + 1]]

    def inverse(self, p):
        m = self.ptr[p + 1] - self.ptr[p]
        return self.inv_vals[self.inv_ptr[p]:self.inv_ptr[p + 1]].reshape(m, m)

    def row_blocks(self, B):
        if self._rows is None:
            self._rows = [B[self.patch(p)] for p in range(self.n_patches)]
        return self._rows

    def covered(self, n):
        mask = np.zeros(n, dtype=bool)
        mask[self.dofs] = True
        return mask


def build_vanka_patches(B, n_v2, rcond=1e-13):
    """One patch per multiplier DoF ``i`` (index ``n_v2 + i`` in ``B``).

    A patch holds ``i`` and every ``V2`` DoF coupled to it; its local matrix
    is ``B`` restricted to those DoFs, inverted once.
    """
    B = csr(B)
    n = B.shape[0]
    sets, inverses = [], []
    for i in range(n_v2, n):
        cols = B.indices[B.indptr[i]:B.indptr[i + 1]]
        vals = B.data[B.indptr[i]:B.indptr[i + 1]]
        v2 = cols[(cols < n_v2) & (vals != 0.0)]
        dofs = np.concatenate([np.sort(v2), [i]]).astype(np.int64)
        local = B[dofs][:, dofs].toarray()
        s = np.linalg.svd(local, compute_uv=False)
        if s[-1] <= rcond * s[0]:
            raise SingularPatchError(i - n_v2, f"(singular value ratio {s[-1] / s[0]:.2e})")
        sets.append(dofs)
        inverses.append(np.linalg.inv(local))
    patches = VankaPatches(sets, inverses, np.arange(n - n_v2))
    missing = np.flatnonzero(~patches.covered(n)[:n_v2])
    if missing.size:
        warnings.warn(f"{missing.size} V2 DoFs are in no Vanka patch and will "
                      "never be smoothed", RuntimeWarning, stacklevel=2)
    return patches


def vanka_sweep(B, patches, x, b, reverse=False):
    """One multiplicative Vanka pass over all patches, in place."""
    return kernels.vanka(B, patches, x, b, reverse=reverse)


class VankaSmoother:
    """Multiplicative Vanka in ascending multiplier order.

    The adjoint pass visits the patches in descending order (``B`` and every
    patch matrix are symmetric).
    """

    def __init__(self, B, n_v2):
        self.A = csr(B)
        self.patches = build_vanka_patches(self.A, n_v2)

    def smooth(self, x, b, steps, transpose=False):
        for _ in range(steps):
            kernels.vanka(self.A, self.patches, x, b, reverse=transpose)
        return x


# ------------------------------------------------------------ V-cycle


class _CoarseSolver:
    def __init__(self, A):
        try:
            self._fact = Factorization(A)
            self._pinv = None
        except SingularMatrixError:
            log.warning("coarse operator is singular, using a pseudo-inverse")
            warnings.warn("singular coarse operator: pseudo-inverse fallback",
                          RuntimeWarning, stacklevel=3)
            self._fact = None
            self._pinv = sla.pinv(A.toarray())

    def solve(self, b, trans=False):
        if self._fact is not None:
            return self._fact.solve(b, trans=trans)
        return (self._pinv.T if trans else self._pinv) @ b


class MgHierarchy:
    """Operators, transfers and smoothers on levels ``0 .. L-1`` (coarsest first).

    ``transfers[k]`` prolongates from level ``k-1`` to level ``k``;
    ``transfers[0]`` is unused.
    """

    def __init__(self, operators, transfers, smoothers, pre_smooth_steps=2,
                 post_smooth_steps=2):
        if len(operators) != len(transfers) or len(operators) != len(smoothers):
            raise ValueError("one operator, transfer and smoother per level")
        self.operators = [csr(A) for A in operators]
        self.transfers = transfers
        self.smoothers = smoothers
        self.pre_smooth_steps = pre_smooth_steps
        self.post_smooth_steps = post_smooth_steps
        self.coarse_solver = _CoarseSolver(self.operators[0])

    @property
    def n_levels(self):
        return len(self.operators)

    @property
    def n(self):
        return self.operators[-1].shape[0]

    def v_cycle(self, level, x, b, transpose=False):
        """One V-cycle on ``level`` starting from ``x``; returns the new iterate.

        With ``transpose`` the cycle applies the adjoint of the
        zero-initial-guess cycle: smoothers are swapped and adjointed and the
        coarse solve is transposed.
        """
        if level == 0:
            return self.coarse_solver.solve(b, trans=transpose)
        A = self.operators[level]
        smoother = self.smoothers[level]
        T = self.transfers[level]
        pre, post = self.pre_smooth_steps, self.post_smooth_steps
        if transpose:
            pre, post = post, pre
        x = np.array(x, dtype=float, order="C")
        smoother.smooth(x, b, pre, transpose=transpose)
        r = b - kernels.spmv(A, x)
        ec = self.v_cycle(level - 1, np.zeros((T.prolongation.shape[1],) + r.shape[1:]),
                          T.restrict(r), transpose)
        x += T.prolongate(ec)
        smoother.smooth(x, b, post, transpose=transpose)
        return x

    def apply(self, b, cycles=1, transpose=False):
        """Approximate ``A^{-1} b`` with ``cycles`` V-cycles from a zero guess."""
        b = np.asarray(b, dtype=float)
        top = self.n_levels - 1
        A = self.operators[top]
        x = self.v_cycle(top, np.zeros_like(b), b, transpose)
        AT = A.T.tocsr() if transpose and cycles > 1 else A
        for _ in range(cycles - 1):
            x = x + self.v_cycle(top, np.zeros_like(b), b - kernels.spmv(AT, x), transpose)
        return x

    def as_operator(self, cycles=1):
        n = self.n
        return LinearOperator(
            (n, n), dtype=float,
            matvec=lambda b: self.apply(b, cycles),
            matmat=lambda b: self.apply(b, cycles),
            rmatvec=lambda b: self.apply(b, cycles, transpose=True),
            rmatmat=lambda b: self.apply(b, cycles, transpose=True))


def v_cycle(hier, level, x, b):
    return hier.v_cycle(level, x, b)


# ------------------------------------------------------------ builders


def a1_hierarchy(systems_or_operators, spaces, omega=1.0, pre=2, post=2):
    """SOR multigrid for the Dirichlet-eliminated background stiffness.

    ``spaces[k]`` is the background Q1 space on level ``k``; prolongations
    ignore Dirichlet DoFs on both sides.
    """
    ops = list(systems_or_operators)
    transfers = [None]
    for k in range(1, len(ops)):
        T = build_q1_transfer(spaces[k - 1], spaces[k])
        transfers.append(mask_transfer(T, spaces[k].boundary_dofs,
                                       spaces[k - 1].boundary_dofs))
    smoothers = [None] + [SORSmoother(A, omega) for A in ops[1:]]
    return MgHierarchy(ops, transfers, smoothers, pre, post)


def b_hierarchy(operators, space_pairs, pre=2, post=2):
    """Vanka multigrid for the immersed saddle-point block ``B``.

    ``space_pairs[k]`` is the ``(V2, Lambda)`` space pair on level ``k``.
    """
    ops = [csr(B) for B in operators]
    transfers = [None]
    for k in range(1, len(ops)):
        transfers.append(build_mixed_transfer(space_pairs[k - 1], space_pairs[k]))
    smoothers = [None] + [VankaSmoother(B, pairs[0].n_dofs)
                          for B, pairs in zip(ops[1:], space_pairs[1:])]
    return MgHierarchy(ops, transfers, smoothers, pre, post)
