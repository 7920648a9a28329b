"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``STOPPED_EULER_PURE=1`` to force the numpy path.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("STOPPED_EULER_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

_threads = 1


def set_threads(n: int) -> None:
    """Worker threads for the compiled kernels; never changes results."""
    global _threads
    _threads = max(1, int(n))


def hs_weighted_sums(g, r, n):
    return _impl.hs_weighted_sums(g, r, n, _threads)
