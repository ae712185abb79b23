"""Kernel backend selection.

The compiled extension is preferred; ``HDP_MEAN_BACKEND=python`` forces the
numpy fallback (useful for benchmarking and for checking the two agree).
"""
import os

from hdp_mean import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from hdp_mean import _kernels
except ImportError:  # extension not built
    _kernels = None
else:
    BACKENDS["cython"] = _kernels

_requested = os.environ.get("HDP_MEAN_BACKEND", "").strip().lower()
if _requested == "python" or _kernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

kernels = BACKENDS[BACKEND]


def get_kernels(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {sorted(BACKENDS)}") from None
