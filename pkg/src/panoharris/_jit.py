"""Optional numba compilation for the per-pixel hot loops.

Every compiled kernel has a vectorised numpy counterpart that produces
identical results; the numpy form is used when numba is unavailable.
"""

from __future__ import annotations

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

HAVE_NUMBA = numba is not None


def compile_kernel(fn):
    """``numba.njit`` with on-disk caching, or ``None`` without numba."""
    if numba is None:  # pragma: no cover
        return None
    return numba.njit(cache=True, nogil=True)(fn)
