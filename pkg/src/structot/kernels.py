"""Kernel backend selected at import time.

The compiled ``_core`` extension is used when it imports; otherwise, or when
the environment variable ``STRUCTOT_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the NumPy kernels in ``_kernels_py`` are used.
Both expose ``g_eval``, ``group_greedy``, ``group_eval``, ``sfm_prefix``,
``project_one``, ``group_project``, ``group_bcd`` and ``sinkhorn_scale``.
"""
import os

from . import _kernels_py

_force_py = os.environ.get("STRUCTOT_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_py:
        raise ImportError("pure-python kernels requested")
    from . import _core as _backend
    BACKEND = "compiled"
except ImportError:
    _backend = _kernels_py
    BACKEND = "python"

g_eval = _backend.g_eval
group_greedy = _backend.group_greedy
group_eval = _backend.group_eval
sfm_prefix = _backend.sfm_prefix
project_one = _backend.project_one
group_project = _backend.group_project
group_bcd = _backend.group_bcd
sinkhorn_scale = _backend.sinkhorn_scale


def available_backends():
    """Map of backend name to kernel module, for tests and benchmarks."""
    out = {"python": _kernels_py}
    try:
        from . import _core
    except ImportError:
        pass
    else:
        out["compiled"] = _core
    return out
