"""Kernel backend selection.

The numba backend is used unless ``RRTLAB_DISABLE_NUMBA`` is set to a truthy
value or numba cannot be imported; the numpy backend is always available.
Both produce identical results, the numba one is just much faster.
"""

import os
import types

from . import _kernels, _kernels_numpy

_HELPERS = (
    "radius_at",
    "dist_rows",
    "segment_free",
    "grid_size",
    "_axis_cell",
    "_cell_index",
    "_grid_nearest",
    "_grid_near",
    "_link",
    "_unlink",
    "_refresh_subtree",
)


def _env_disabled() -> bool:
    return os.environ.get("RRTLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


def _compile():
    import numba

    jit = numba.njit(cache=True, nogil=True)
    # Compile against a private namespace so the pure-Python originals in
    # _kernels stay importable by the numpy backend.
    ns = dict(vars(_kernels))

    def rebind(fn):
        return types.FunctionType(fn.__code__, ns, fn.__name__, fn.__defaults__)

    for name in _HELPERS:
        ns[name] = jit(rebind(getattr(_kernels, name)))
    return jit(rebind(_kernels.planner_loop)), jit(rebind(_kernels.grid_queries))


_numba_loop = None
_numba_queries = None
_numba_error = None


def numba_available() -> bool:
    global _numba_loop, _numba_queries, _numba_error
    if _numba_loop is None and _numba_error is None:
        try:
            _numba_loop, _numba_queries = _compile()
        except Exception as exc:  # ImportError or a numba build problem
            _numba_error = exc
    return _numba_loop is not None


def default_backend() -> str:
    if _env_disabled() or not numba_available():
        return "numpy"
    return "numba"


def planner_loop(*args, backend=None):
    backend = backend or default_backend()
    if backend == "numba":
        if not numba_available():
            raise RuntimeError(f"numba backend unavailable: {_numba_error}")
        return _numba_loop(*args)
    if backend == "numpy":
        return _kernels_numpy.planner_loop(*args)
    raise ValueError(f"unknown backend {backend!r}")


def grid_queries(V, Q, r, backend=None):
    """Run the planner's grid nearest/near search on a batch of queries."""
    backend = backend or default_backend()
    if backend == "numba":
        if not numba_available():
            raise RuntimeError(f"numba backend unavailable: {_numba_error}")
        return _numba_queries(V, Q, float(r))
    if backend == "numpy":
        # The numpy backend never builds a grid; run the kernel source uncompiled.
        return _kernels.grid_queries(V, Q, float(r))
    raise ValueError(f"unknown backend {backend!r}")
