"""Backend switch for the hot kernels.

Numba is used when importable unless ``FRACHEAT_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``.  The pure numpy kernels are always importable
so both paths can be tested and benchmarked side by side.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
DISABLED = os.environ.get("FRACHEAT_DISABLE_NUMBA", "") not in ("", "0")
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(func):
    """``numba.njit(cache=True, nogil=True)`` or the identity without numba."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
