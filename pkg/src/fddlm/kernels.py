"""Hot inner loops: CSR products, SOR sweeps and multiplicative Vanka sweeps.

Every kernel has a numba implementation (``*_numba``) and a numpy/scipy
implementation (``*_numpy``).  The un-suffixed dispatchers pick one at call
time from :data:`fddlm._accel.USE_NUMBA`, so the choice can be flipped with
``FDDLM_DISABLE_NUMBA=1`` or by patching the flag in tests and benchmarks.

All kernels accept ``x`` and ``b`` either as vectors or as ``(n, k)`` blocks
of ``k`` right-hand sides.  SOR and Vanka update ``x`` in place.
"""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from fddlm import _accel
from fddlm._accel import njit


def _as_block(v):
    v = np.asarray(v, dtype=float)
    return v.reshape(-1, 1) if v.ndim == 1 else v


# ---------------------------------------------------------------- spmv


@njit(cache=True)
def _csr_matmat_nb(indptr, indices, data, x, out):
    n = out.shape[0]
    k = out.shape[1]
    for i in range(n):
        for c in range(k):
            out[i, c] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            a = data[p]
            j = indices[p]
            for c in range(k):
                out[i, c] += a * x[j, c]


@njit(cache=True)
def _csr_matvec_nb(indptr, indices, data, x, out):
    for i in range(out.shape[0]):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc


def spmv_numba(A, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        out = np.empty(A.shape[0])
        _csr_matvec_nb(A.indptr, A.indices, A.data, x, out)
        return out
    xb = np.ascontiguousarray(_as_block(x))
    out = np.empty((A.shape[0], xb.shape[1]))
    _csr_matmat_nb(A.indptr, A.indices, A.data, xb, out)
    return out.ravel() if x.ndim == 1 else out


def spmv_numpy(A, x):
    return A @ np.asarray(x, dtype=float)


def spmv(A, x):
    if _accel.USE_NUMBA:
        return spmv_numba(A, x)
    return spmv_numpy(A, x)


# ---------------------------------------------------------------- SOR


@njit(cache=True)
def _sor_nb(indptr, indices, data, x, b, omega, backward):
    n = x.shape[0]
    k = x.shape[1]
    acc = np.empty(k)
    for t in range(n):
        i = n - 1 - t if backward else t
        diag = 0.0
        for c in range(k):
            acc[c] = b[i, c]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            a = data[p]
            if j == i:
                diag += a
            else:
                for c in range(k):
                    acc[c] -= a * x[j, c]
        for c in range(k):
            x[i, c] = (1.0 - omega) * x[i, c] + omega * acc[c] / diag


def sor_numba(A, x, b, omega, backward=False):
    xb = _as_block(x)
    bb = np.ascontiguousarray(_as_block(b))
    if not xb.flags.c_contiguous:
        raise ValueError("x must be C-contiguous for an in-place sweep")
    _sor_nb(A.indptr, A.indices, A.data, xb, bb, float(omega), bool(backward))
    return x


def sor_numpy(A, x, b, omega, backward=False):
    # x <- x + M^{-1}(b - A x) with M = D/omega + (strict lower | strict upper)
    d = A.diagonal()
    tri = sp.triu(A, k=1) if backward else sp.tril(A, k=-1)
    M = (tri + sp.diags(d / omega)).tocsr()
    r = np.asarray(b, dtype=float) - A @ x
    x += spsolve_triangular(M, r, lower=not backward)
    return x


def sor(A, x, b, omega, backward=False):
    if _accel.USE_NUMBA:
        return sor_numba(A, x, b, omega, backward)
    return sor_numpy(A, x, b, omega, backward)


# ---------------------------------------------------------------- Vanka


@njit(cache=True)
def _vanka_nb(indptr, indices, data, patch_ptr, patch_dofs, inv_ptr, inv_vals,
              x, b, reverse, max_size):
    npatch = patch_ptr.shape[0] - 1
    k = x.shape[1]
    r = np.empty((max_size, k))
    for t in range(npatch):
        p = npatch - 1 - t if reverse else t
        s = patch_ptr[p]
        m = patch_ptr[p + 1] - s
        for a in range(m):
            i = patch_dofs[s + a]
            for c in range(k):
                r[a, c] = b[i, c]
            for q in range(indptr[i], indptr[i + 1]):
                v = data[q]
                j = indices[q]
                for c in range(k):
                    r[a, c] -= v * x[j, c]
        off = inv_ptr[p]
        for a in range(m):
            i = patch_dofs[s + a]
            for c in range(k):
                acc = 0.0
                for e in range(m):
                    acc += inv_vals[off + a * m + e] * r[e, c]
                x[i, c] += acc


def vanka_numba(B, patches, x, b, reverse=False):
    xb = _as_block(x)
    bb = np.ascontiguousarray(_as_block(b))
    if not xb.flags.c_contiguous:
        raise ValueError("x must be C-contiguous for an in-place sweep")
    _vanka_nb(B.indptr, B.indices, B.data, patches.ptr, patches.dofs,
              patches.inv_ptr, patches.inv_vals, xb, bb, bool(reverse),
              patches.max_size)
    return x


def vanka_numpy(B, patches, x, b, reverse=False):
    b = np.asarray(b, dtype=float)
    rows = patches.row_blocks(B)
    order = range(patches.n_patches)
    if reverse:
        order = reversed(order)
    for p in order:
        dofs = patches.dofs[patches.ptr[p]:patches.ptr[p + 1]]
        r = b[dofs] - rows[p] @ x
        x[dofs] += patches.inverse(p) @ r
    return x


def vanka(B, patches, x, b, reverse=False):
    if _accel.USE_NUMBA:
        return vanka_numba(B, patches, x, b, reverse)
    return vanka_numpy(B, patches, x, b, reverse)
