"""Sparse kernels, direct solves, right-preconditioned GMRES, condition numbers.

Matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted column
indices, no duplicates); :func:`csr` normalizes anything else.
"""
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator, splu

from fddlm import kernels

INF = float("inf")


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def csr(A):
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x):
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return kernels.spmv(A, x)


# ------------------------------------------------------------ direct


class Factorization:
    """LU factors of a square matrix; dense below ``dense_below`` unknowns."""

    def __init__(self, A, dense_below=3000, pivot_tol=1e-14):
        A = csr(A)
        n, m = A.shape
        if n != m:
            raise ValueError("LU needs a square matrix")
        self.shape = A.shape
        scale = abs(A).max() if A.nnz else 0.0
        if scale == 0.0:
            raise SingularMatrixError("zero matrix")
        self.dense = n < dense_below
        if self.dense:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                self._lu = sla.lu_factor(A.toarray(), check_finite=False)
            pivots = np.abs(np.diag(self._lu[0]))
        else:
            try:
                self._lu = splu(A.tocsc(), permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SingularMatrixError(str(exc)) from None
            pivots = np.abs(self._lu.U.diagonal())
        if pivots.min() < pivot_tol * scale:
            raise SingularMatrixError(
                f"pivot {pivots.min():.3e} below {pivot_tol:g} * max|A|")

    def solve(self, b, trans=False):
        b = np.asarray(b, dtype=float)
        if self.dense:
            return sla.lu_solve(self._lu, b, trans=1 if trans else 0,
                                check_finite=False)
        return self._lu.solve(b, trans="T" if trans else "N")

    def as_operator(self):
        n = self.shape[0]
        return LinearOperator((n, n), matvec=self.solve, matmat=self.solve,
                              rmatvec=lambda y: self.solve(y, trans=True),
                              rmatmat=lambda y: self.solve(y, trans=True),
                              dtype=float)


def lu_factor(A, dense_below=3000):
    return Factorization(A, dense_below=dense_below)


def lu_solve(fact, b):
    return fact.solve(b)


# ------------------------------------------------------------ GMRES


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    wall_time: float
    residual_history: list = field(default_factory=list)
    final_residual: float = INF
    breakdown: bool = False
    restarts: int = 0


def as_operator(op, n=None):
    if op is None:
        return aslinearoperator(sp.identity(n, format="csr"))
    if isinstance(op, LinearOperator):
        return op
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return aslinearoperator(op)
    if hasattr(op, "as_operator"):
        return op.as_operator()
    if callable(op):
        return LinearOperator((n, n), matvec=op, dtype=float)
    raise TypeError(f"cannot use {type(op).__name__} as a linear operator")


def gmres(op, b, precond=None, abs_tol=1e-12, max_iter=100_000, restart=200,
          x0=None, relative=False):
    """Right-preconditioned restarted GMRES.

    Solves ``op M^{-1} y = b`` and returns ``x = M^{-1} y``; ``precond`` is
    the action of ``M^{-1}``.  The stopping test is on the true residual
    ``||b - op x||`` (divided by ``||b||`` when ``relative``), so it does not
    depend on how good the preconditioner is.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    A = as_operator(op, n)
    M = as_operator(precond, n)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    scale = np.linalg.norm(b) if relative else 1.0
    if scale == 0.0:
        scale = 1.0
    tol = abs_tol * scale

    r = b - A.matvec(x)
    beta = np.linalg.norm(r)
    history = [beta / scale]
    it = 0
    restarts = 0
    breakdown = False
    m = max(1, min(restart, max_iter))
    while beta >= tol and it < max_iter:
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / beta
        g[0] = beta
        k = 0
        for j in range(m):
            w = A.matvec(M.matvec(V[j]))
            # classical Gram-Schmidt, twice
            h = V[: j + 1] @ w
            w = w - V[: j + 1].T @ h
            h2 = V[: j + 1] @ w
            w = w - V[: j + 1].T @ h2
            H[: j + 1, j] = h + h2
            H[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                a, c = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * a + sn[i] * c
                H[i + 1, j] = -sn[i] * a + cs[i] * c
            sub = H[j + 1, j]
            rho = np.hypot(H[j, j], sub)
            cs[j], sn[j] = H[j, j] / rho, sub / rho
            H[j, j] = rho
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            it += 1
            k = j + 1
            history.append(abs(g[j + 1]) / scale)
            if sub < 1e-300:
                breakdown = True
                break
            if abs(g[j + 1]) < tol or it >= max_iter:
                break
            V[j + 1] = w / sub
        y = sla.solve_triangular(H[:k, :k], g[:k])
        x = x + M.matvec(V[:k].T @ y)
        r = b - A.matvec(x)
        beta = np.linalg.norm(r)
        restarts += 1
        if breakdown:
            break
    final = beta / scale
    return x, SolveReport(
        converged=bool(final < abs_tol),
        iterations=it,
        wall_time=time.perf_counter() - t0,
        residual_history=history,
        final_residual=final,
        breakdown=breakdown,
        restarts=restarts,
    )


# ------------------------------------------------------------ conditioning


def materialize(op):
    """Dense matrix of an operator, built from its action on the identity."""
    if sp.issparse(op):
        return op.toarray()
    if isinstance(op, np.ndarray):
        return op
    op = as_operator(op)
    return np.asarray(op.matmat(np.eye(op.shape[1])))


def _lanczos_max(apply, n, tol, max_steps, rng):
    """Largest eigenvalue of a symmetric positive semidefinite operator."""
    max_steps = min(max_steps, n)
    Q = np.zeros((max_steps + 1, n))
    q = rng.standard_normal(n)
    Q[0] = q / np.linalg.norm(q)
    alpha = np.zeros(max_steps)
    beta = np.zeros(max_steps)
    theta = 0.0
    for k in range(max_steps):
        w = apply(Q[k])
        alpha[k] = Q[k] @ w
        w = w - Q[: k + 1].T @ (Q[: k + 1] @ w)
        w = w - Q[: k + 1].T @ (Q[: k + 1] @ w)
        beta[k] = np.linalg.norm(w)
        ev, evec = sla.eigh_tridiagonal(alpha[: k + 1], beta[:k])
        theta = ev[-1]
        resid = abs(beta[k] * evec[-1, -1])
        if resid <= tol * abs(theta) or beta[k] <= 1e-14 * abs(theta):
            break
        Q[k + 1] = w / beta[k]
    return theta


def estimate_condition_number(op, mode="dense_svd", dense_cap=6000, solve=None,
                              rsolve=None, tol=1e-6, max_steps=400, seed=0):
    """2-norm condition number ``sigma_max / sigma_min`` of ``op``.

    ``dense_svd`` materializes ``op`` and takes singular values.
    ``iterative`` runs Lanczos on ``op^T op`` for the largest singular value
    and on ``op^{-1} op^{-T}`` for the smallest one; the inverse comes from
    ``solve``/``rsolve`` when given, from a sparse LU when ``op`` is a
    matrix, and from inner GMRES solves otherwise.  Singular operators give
    ``inf``.
    """
    if mode == "dense_svd":
        n = as_operator(op).shape[0] if not sp.issparse(op) else op.shape[0]
        if n > dense_cap:
            raise ValueError(f"dense SVD capped at {dense_cap}, operator has {n}")
        s = sla.svdvals(materialize(op), check_finite=False)
        if s[-1] <= s[0] * n * np.finfo(float).eps:
            return INF
        return float(s[0] / s[-1])
    if mode != "iterative":
        raise ValueError(f"unknown mode {mode!r}")

    L = as_operator(op)
    n = L.shape[0]
    rng = np.random.default_rng(seed)
    if solve is None:
        if sp.issparse(op) or isinstance(op, np.ndarray):
            try:
                fact = Factorization(op)
            except SingularMatrixError:
                return INF
            solve = fact.solve
            rsolve = lambda y: fact.solve(y, trans=True)  # noqa: E731
        else:
            def solve(y):
                z, rep = gmres(L, y, abs_tol=1e-13, relative=True, max_iter=20 * n)
                return z

            def rsolve(y):
                z, rep = gmres(L.H, y, abs_tol=1e-13, relative=True, max_iter=20 * n)
                return z

    smax2 = _lanczos_max(lambda v: L.rmatvec(L.matvec(v)), n, tol, max_steps, rng)
    inv2 = _lanczos_max(lambda v: solve(rsolve(v)), n, tol, max_steps, rng)
    if not np.isfinite(inv2) or inv2 <= 0:
        return INF
    return float(np.sqrt(smax2 * inv2))


# ------------------------------------------------------------ MatrixMarket


def write_matrix_market(path, A):
    """Coordinate, real, general; 1-based indices."""
    A = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_matrix_market(path):
    return csr(scipy.io.mmread(path))
