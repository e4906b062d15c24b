"""Select the compiled kernels when available, else the numpy fallback.

Set ``DYADLAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as py

BACKEND = "python"
kernels = py

if os.environ.get("DYADLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _c

        kernels = _c
        BACKEND = "cython"
    except ImportError:
        pass

KIND_ZERO, KIND_HILBERT, KIND_RIESZ, KIND_FRACINT = py.KIND_ZERO, py.KIND_HILBERT, py.KIND_RIESZ, py.KIND_FRACINT


def thread_count() -> int:
    """Worker cap from ``DYADLAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("DYADLAB_THREADS", "1")))
    except ValueError:
        return 1
