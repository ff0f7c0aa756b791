"""Numba switch.

Kernels in :mod:`fddlm.kernels` come in two flavours: a numba ``@njit``
version and a pure numpy/scipy version.  The numba path is used when numba
imports cleanly and ``FDDLM_DISABLE_NUMBA`` is unset (or ``0``).
"""
import os

_flag = os.environ.get("FDDLM_DISABLE_NUMBA", "0").strip().lower()
DISABLED_BY_ENV = _flag not in ("", "0", "false", "no")

try:
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _njit = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not DISABLED_BY_ENV


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if _njit is not None:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
