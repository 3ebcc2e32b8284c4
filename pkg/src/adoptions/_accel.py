"""Backend selection for the hot kernels.

``ADOPTIONS_BACKEND=numpy`` forces the vectorized numpy path; the default is
numba when it imports cleanly. ``ADOPTIONS_DISABLE_NUMBA=1`` is accepted as
an alias for the numpy backend.
"""

import os
import warnings

try:
    import numba

    # numba probes TBB, finds an old build and falls back to another threading layer
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

JIT_OPTIONS = {"nogil": True, "cache": True}

_VALID = ("numba", "numpy")


def _default_backend() -> str:
    requested = os.environ.get("ADOPTIONS_BACKEND", "").strip().lower()
    if os.environ.get("ADOPTIONS_DISABLE_NUMBA", "").strip() not in ("", "0"):
        requested = "numpy"
    if requested and requested not in _VALID:
        raise ValueError(f"ADOPTIONS_BACKEND must be one of {_VALID}, got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        raise ImportError("ADOPTIONS_BACKEND=numba but numba is not installed")
    return requested or ("numba" if HAVE_NUMBA else "numpy")


BACKEND = _default_backend()


def resolve_backend(backend=None) -> str:
    if backend is None:
        return BACKEND
    backend = backend.lower()
    if backend not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise ImportError("numba backend requested but numba is not installed")
    return backend


def njit(*args, **kwargs):
    """``numba.njit`` with project defaults; a no-op decorator without numba."""
    options = {**JIT_OPTIONS, **kwargs}
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    if args and callable(args[0]):
        return numba.njit(**options)(args[0])
    return numba.njit(*args, **options)
