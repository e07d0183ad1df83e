"""Backend selection for the inner-loop kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback in ``_kernels_py``. Set ``BOTGAN_PURE_PYTHON=1`` to force the
fallback. Callers pass C-contiguous float64 / int64 arrays.
"""
import os

from . import _kernels_py

if os.environ.get("BOTGAN_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

best_split = _impl.best_split
apply_tree = _impl.apply_tree
ks_statistic = _impl.ks_statistic

BACKENDS = {"python": _kernels_py}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
else:
    try:
        from . import _kernels as _compiled

        BACKENDS["cython"] = _compiled
    except ImportError:
        pass
