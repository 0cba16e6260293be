"""JIT selection for the numeric kernels.

Kernels are written in the numba-compatible subset of Python.  With numba
available they are compiled with ``njit``; set ``SCBANK_JIT=0`` to run the
same source as plain numpy/Python (useful for debugging and for the
benchmark that compares both paths).
"""

import os

_FLAG = os.environ.get("SCBANK_JIT", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_ENABLED = numba is not None and _FLAG not in ("0", "false", "no", "off")


def jit(fn):
    if JIT_ENABLED:
        return numba.njit(cache=True)(fn)
    return fn


def py_func(fn):
    """The undecorated Python function behind a (possibly) jitted kernel."""
    return getattr(fn, "py_func", fn)


def is_jitted(fn):
    return numba is not None and isinstance(fn, numba.core.registry.CPUDispatcher)
