"""Numba switch.

Set ``SSVEP_ALIGN_NUMBA=0`` to force the pure-numpy kernels. Numba is also
skipped silently when it cannot be imported.
"""
import os

_FLAG = os.environ.get("SSVEP_ALIGN_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("0", "false", "no", "off")


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is importable, else return it as is."""
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)
