"""Numba switch.

Kernels are written once as plain Python over numpy arrays and compiled
with ``numba.njit`` unless ``BOLTZGEN_DISABLE_JIT`` is set to a true value
(or numba cannot be imported), in which case they run as ordinary Python.
"""

import os

_FALSY = ("", "0", "false", "no", "off")

JIT_REQUESTED = os.environ.get("BOLTZGEN_DISABLE_JIT", "0").strip().lower() in _FALSY

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_ENABLED = JIT_REQUESTED and numba is not None


def njit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` or the identity, depending on JIT_ENABLED."""

    def wrap(f):
        if not JIT_ENABLED:
            return f
        return numba.njit(cache=True, **kwargs)(f)

    if fn is None:
        return wrap
    return wrap(fn)


def backend() -> str:
    return f"numba-{numba.__version__}" if JIT_ENABLED else "python"
