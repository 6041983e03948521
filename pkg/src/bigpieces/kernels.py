"""Kernel backend selection.

The compiled extension is used when it imports; set ``BIGPIECES_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("BIGPIECES_PURE_PYTHON", "") != "1":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

lipschitz_prune = _impl.lipschitz_prune
count_violations = _impl.count_violations


def backends():
    """Return the available ``{name: module}`` kernel implementations."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
