"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting the environment
variable ``SRP_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

MODE_SYM = _pykernels.MODE_SYM
MODE_NONSYM = _pykernels.MODE_NONSYM
MODE_SQUARED = _pykernels.MODE_SQUARED
P_ONE = _pykernels.P_ONE
P_TWO = _pykernels.P_TWO
P_INF = _pykernels.P_INF

_compiled = None
if os.environ.get("SRP_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _pykernels

# the best-point scan is O(n^2 d); for wide, large inputs numpy's vectorized
# distance loop beats the scalar one (measured crossover, see benchmarks/)
LARGE_MEDIAN_WORK = 1e7
WIDE_MEDIAN_DIM = 16


def geometric_median(X, w, tol, max_iter):
    """Dispatching weighted geometric median; returns ``(y, iterations)``."""
    n, d = X.shape
    kern = _pykernels if d >= WIDE_MEDIAN_DIM and n * n * d >= LARGE_MEDIAN_WORK else _impl
    return kern.geometric_median(X, w, tol, max_iter)


subgradient_run = _impl.subgradient_run


def get_backend(name):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def compiled_available():
    return _compiled is not None
