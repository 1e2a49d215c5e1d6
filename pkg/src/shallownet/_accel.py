"""Optional numba acceleration.

Set ``SHALLOWNET_DISABLE_NUMBA=1`` before import to force the pure-numpy
kernels. Both paths stay importable so tests and benchmarks can compare them.
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

DISABLED = os.environ.get("SHALLOWNET_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = HAVE_NUMBA and not DISABLED

_defaults = {"nogil": True, "cache": True, "fastmath": False}


def njit(*args, **kwargs):
    """``numba.njit`` with project defaults; identity when numba is absent."""
    opts = dict(_defaults, **kwargs)

    def decorator(func):
        if not HAVE_NUMBA:
            return func
        return numba.njit(**opts)(func)

    if args and callable(args[0]):
        return decorator(args[0])
    return decorator


def backend():
    return "numba" if USE_NUMBA else "numpy"
