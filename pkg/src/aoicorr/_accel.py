"""Numba acceleration switch for the hot kernels.

Kernels in :mod:`aoicorr._kernels` are JIT-compiled when numba imports
cleanly and the ``AOI_CORR_NO_NUMBA`` environment variable is unset (or
"0"/"false").  Setting the flag selects the pure numpy/Python fallback:
the same function bodies run uncompiled and produce bit-identical
results, just slower.  ``benchmarks/bench_kernels.py`` measures the gap.
"""

from __future__ import annotations

import os


def _flag_set(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false")


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_ENABLED = numba is not None and not _flag_set("AOI_CORR_NO_NUMBA")


def maybe_njit(func):
    """``numba.njit(cache=True, nogil=True)`` when enabled, identity otherwise."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def python_impl(func):
    """The uncompiled implementation backing a (possibly jitted) kernel."""
    return getattr(func, "py_func", func)
