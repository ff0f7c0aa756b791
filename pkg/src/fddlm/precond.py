"""Block-triangular and block-diagonal preconditioners over ``{u} x {u2, lam}``.

With ``B = [[A2, -C2^T], [-C2, 0]]`` the system matrix reads
``[[A1, Ct], [Cb, B]]`` where ``Ct = [0 | C1^T]`` and ``Cb = Ct^T``:

* ``P1 = [[A1, Ct], [0, B]]`` (upper),
* ``P2 = [[A1, 0], [Cb, B]]`` (lower),
* ``P3 = [[A1, 0], [0, B]]`` (diagonal).

Each diagonal block inverse is either an LU solve ("d") or one V-cycle from
a zero initial guess ("m"); a variant label such as ``"dm"`` gives the A1
choice first and the B choice second.
"""
import enum
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from fddlm import multigrid as mg
from fddlm.assembly import (ElementChoice, apply_dirichlet, assemble_C2,
                            assemble_stiffness, make_spaces)
from fddlm.elements import ElementKind, enumerate_dofs, on_mesh_boundary
from fddlm.linalg import Factorization, SingularMatrixError, csr, gmres

import scipy.sparse as sp


class Shape(enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"


class Inverse(enum.Enum):
    direct = "d"
    multigrid = "m"


VARIANTS = ("dd", "dm", "md", "mm")


@dataclass(frozen=True)
class PrecondSpec:
    shape: Shape
    a1_inverse: Inverse
    b_inverse: Inverse

    @classmethod
    def parse(cls, shape, variant):
        variant = variant.lower()
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        return cls(Shape(str(shape).upper()), Inverse(variant[0]), Inverse(variant[1]))

    @property
    def variant(self):
        return self.a1_inverse.value + self.b_inverse.value


@dataclass(frozen=True)
class MgConfig:
    smooth_steps: int = 2
    # None: same as smooth_steps, raised to 5 for Element2 with a multigrid B
    b_smooth_steps: int | None = None
    sor_omega: float = 1.0
    cycles: int = 1


class BlockSolveError(np.linalg.LinAlgError):
    pass


def _direct(A, block):
    try:
        return Factorization(A)
    except SingularMatrixError as exc:
        raise BlockSolveError(f"{block}: {exc}") from None


class _DirectInverse:
    """LU solve plus one step of iterative refinement.

    The L2-coupled blocks have condition numbers near 1e10, and a single
    solve leaves a residual several times above 1e-10; one refinement step
    brings it down by about an order of magnitude.
    """

    def __init__(self, A, fact):
        self.A = A
        self.fact = fact

    def __call__(self, r, transpose=False):
        M = self.A.T if transpose else self.A
        z = self.fact.solve(r, trans=transpose)
        return z + self.fact.solve(r - M @ z, trans=transpose)

    def forward(self, z, transpose=False):
        return (self.A.T if transpose else self.A) @ z


class _CycleInverse:
    """``M`` = a fixed number of V-cycles approximating ``X^{-1}``."""

    def __init__(self, X, hier, cycles, inner_tol=1e-10, inner_max_iter=2000):
        self.X = X
        self.hier = hier
        self.cycles = cycles
        self.inner_tol = inner_tol
        self.inner_max_iter = inner_max_iter

    def __call__(self, r, transpose=False):
        return self.hier.apply(r, self.cycles, transpose=transpose)

    def forward(self, z, transpose=False):
        """Action of ``M^{-1}`` (or ``M^{-T}``), by inner GMRES.

        ``M^{-1} = X (M X)^{-1}`` and ``M^{-T} = (X^T M^T)^{-1} X^T``; both
        inner operators are close to the identity when the cycle is good.
        """
        n = self.X.shape[0]
        X, XT = self.X, self.X.T.tocsr()
        if transpose:
            op = LinearOperator((n, n), dtype=float,
                                matvec=lambda v: XT @ self(v, transpose=True))
            v, _ = gmres(op, XT @ z, abs_tol=self.inner_tol, relative=True,
                         max_iter=self.inner_max_iter)
            return v
        op = LinearOperator((n, n), dtype=float, matvec=lambda v: self(X @ v))
        v, _ = gmres(op, z, abs_tol=self.inner_tol, relative=True,
                     max_iter=self.inner_max_iter)
        return X @ v


def a1_levels(system):
    """Dirichlet-eliminated background stiffness and Q1 space on every level."""
    v = system.spaces[0]
    beta = system.config.beta
    ops, spaces = [], []
    for k in range(1, v.level_index + 1):
        sk = enumerate_dofs(v.hierarchy, k, ElementKind.Q1, on_mesh_boundary)
        A = assemble_stiffness(sk, beta)
        A, _ = apply_dirichlet(A, np.zeros(sk.n_dofs), sk.boundary_dofs)
        ops.append(A)
        spaces.append(sk)
    ops[-1] = system.A1
    return ops, spaces


def b_levels(system):
    """The immersed block ``B`` and its ``(V2, Lambda)`` spaces on every disk level."""
    cfg = system.config
    v2 = system.spaces[1]
    ops, pairs = [], []
    for k in range(1, v2.level_index + 1):
        _, s2, sl = make_spaces(cfg, system.spaces[0].hierarchy, v2.hierarchy,
                                system.spaces[0].level_index, k)
        A2 = assemble_stiffness(s2, cfg.beta2 - cfg.beta)
        C2 = assemble_C2(sl, s2, cfg.coupling_mode)
        ops.append(csr(sp.bmat([[A2, -C2.T], [-C2, None]])))
        pairs.append((s2, sl))
    ops[-1] = system.B()
    return ops, pairs


def b_smooth_steps(system, spec, mg_config):
    if mg_config.b_smooth_steps is not None:
        return mg_config.b_smooth_steps
    if (system.config.element_choice is ElementChoice.Element2
            and spec.b_inverse is Inverse.multigrid):
        return 5
    return mg_config.smooth_steps


class BlockPreconditioner:
    """Action of ``P^{-1}`` on full-system vectors (or blocks of vectors)."""

    def __init__(self, spec, a1_solver, b_solver, C1, sizes):
        self.spec = spec
        self.a1_solver = a1_solver
        self.b_solver = b_solver
        self.C1 = csr(C1)
        self.C1T = self.C1.T.tocsr()
        self.sizes = sizes

    @property
    def n(self):
        return sum(self.sizes)

    def _split(self, r):
        n1, n2, _ = self.sizes
        return r[:n1], r[n1:]

    def _ct(self, zb):
        # [0 | C1^T] (z2, zl)
        return self.C1T @ zb[self.sizes[1]:]

    def _cb(self, zu):
        # [0; C1] zu
        out = self.C1 @ zu
        pad = np.zeros((self.sizes[1],) + out.shape[1:])
        return np.concatenate([pad, out])

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        ru, rb = self._split(r)
        shape = self.spec.shape
        if shape is Shape.P1:
            zb = self.b_solver(rb)
            zu = self.a1_solver(ru - self._ct(zb))
        elif shape is Shape.P2:
            zu = self.a1_solver(ru)
            zb = self.b_solver(rb - self._cb(zu))
        else:
            zu = self.a1_solver(ru)
            zb = self.b_solver(rb)
        return np.concatenate([zu, zb])

    def rapply(self, r):
        """Action of ``P^{-T}``."""
        r = np.asarray(r, dtype=float)
        ru, rb = self._split(r)
        shape = self.spec.shape
        if shape is Shape.P1:
            # P1^{-T} = [[A1^{-T}, 0], [-B^{-T} Ct^T A1^{-T}, B^{-T}]]
            zu = self.a1_solver(ru, transpose=True)
            zb = self.b_solver(rb - self._cb(zu), transpose=True)
        elif shape is Shape.P2:
            zb = self.b_solver(rb, transpose=True)
            zu = self.a1_solver(ru - self._ct(zb), transpose=True)
        else:
            zu = self.a1_solver(ru, transpose=True)
            zb = self.b_solver(rb, transpose=True)
        return np.concatenate([zu, zb])

    def forward(self, z, transpose=False):
        """Action of ``P`` (or ``P^T``) itself, the inverse of :meth:`apply`."""
        z = np.asarray(z, dtype=float)
        zu, zb = self._split(z)
        a1, b = self.a1_solver.forward, self.b_solver.forward
        shape = self.spec.shape
        # transposing swaps the triangle the coupling block sits in
        upper = shape is (Shape.P2 if transpose else Shape.P1)
        lower = shape is (Shape.P1 if transpose else Shape.P2)
        ru = a1(zu, transpose)
        rb = b(zb, transpose)
        if upper:
            ru = ru + self._ct(zb)
        if lower:
            rb = rb + self._cb(zu)
        return np.concatenate([ru, rb])

    def as_operator(self):
        n = self.n
        return LinearOperator((n, n), dtype=float, matvec=self.apply,
                              matmat=self.apply, rmatvec=self.rapply,
                              rmatmat=self.rapply)


def apply_preconditioner(p, r):
    return p.apply(r)


def build_preconditioner(system, spec, mg_config=None):
    """Set up both block inverses of ``spec`` for ``system``.

    Multigrid inverses re-assemble the blocks on every coarser level of the
    meshes the system was assembled on.
    """
    mg_config = mg_config or MgConfig()
    if spec.a1_inverse is Inverse.direct:
        a1 = _DirectInverse(system.A1, _direct(system.A1, "A1"))
    else:
        ops, spaces = a1_levels(system)
        s = mg_config.smooth_steps
        a1 = _CycleInverse(system.A1,
                           mg.a1_hierarchy(ops, spaces, mg_config.sor_omega, s, s),
                           mg_config.cycles)
    if spec.b_inverse is Inverse.direct:
        try:
            B = system.B()
            b = _DirectInverse(B, _direct(B, "B"))
        except BlockSolveError as exc:
            cfg = system.config
            if cfg is not None and cfg.beta2 <= cfg.beta:
                raise BlockSolveError(
                    f"{exc}; beta2={cfg.beta2} <= beta={cfg.beta}, so B is not "
                    "guaranteed to be invertible") from None
            raise
    else:
        ops, pairs = b_levels(system)
        s = b_smooth_steps(system, spec, mg_config)
        b = _CycleInverse(ops[-1], mg.b_hierarchy(ops, pairs, s, s), mg_config.cycles)
    return BlockPreconditioner(spec, a1, b, system.C1, system.sizes)


def preconditioned_operator(A, prec):
    """``P^{-1} A`` as a linear operator with its adjoint."""
    A = csr(A)
    AT = A.T.tocsr()
    n = A.shape[0]
    return LinearOperator(
        (n, n), dtype=float,
        matvec=lambda x: prec.apply(A @ x),
        matmat=lambda X: prec.apply(A @ X),
        rmatvec=lambda y: AT @ prec.rapply(y),
        rmatmat=lambda Y: AT @ prec.rapply(Y))
