"""Numba switch.

Set ``QAOARBM_DISABLE_NUMBA=1`` to run every hot loop through its pure-numpy
fallback instead of the compiled kernel. The flag is read once at import.
"""

import os

USE_NUMBA = os.environ.get("QAOARBM_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit, prange
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f

        return wrapper

    prange = range

__all__ = ["USE_NUMBA", "njit", "prange"]
