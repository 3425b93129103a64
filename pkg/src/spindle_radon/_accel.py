"""Optional numba acceleration.

Kernels are written once as plain Python loops and compiled with
``numba.njit`` when numba is importable. Setting the environment variable
``SPINDLE_RADON_NO_NUMBA=1`` before import selects the pure-numpy code
paths instead (useful for debugging and for the benchmark).
"""
import os

ENV_FLAG = "SPINDLE_RADON_NO_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_set():
    return os.environ.get(ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _flag_set()


def njit(func):
    """Compile ``func`` with numba (nogil, cached) if available, else return it."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
