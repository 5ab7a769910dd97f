"""Numba switch.

Hot kernels are written twice: a loop version compiled with ``numba.njit``
and a vectorised numpy version. Setting ``ENSPOD_DISABLE_NUMBA=1`` (or not
having numba installed) selects the numpy path everywhere.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("ENSPOD_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator.

    ``cache`` defaults to True; compiled kernels never use ``parallel`` so
    results do not depend on the thread count.
    """
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend():
    return "numba" if USE_NUMBA else "numpy"
