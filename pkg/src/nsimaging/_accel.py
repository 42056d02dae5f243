"""Numba switch for the hot kernels.

Set ``NSIMAGING_DISABLE_NUMBA=1`` in the environment to force the pure-numpy
path. The flag is read once at import; tests flip :data:`USE_NUMBA` directly.
"""

import os

_DISABLED = os.environ.get("NSIMAGING_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

# the system TBB is too old for numba and only produces a warning; prefer OpenMP
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching, or a no-op decorator without numba."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
