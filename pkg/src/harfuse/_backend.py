"""Select the kernel implementation once, at import.

The compiled extension is used when it was built; otherwise the numpy
fallback. Setting ``HARFUSE_PURE_PYTHON=1`` forces the fallback.
"""
import os

from harfuse import _pykernels

if os.environ.get("HARFUSE_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
else:
    try:
        from harfuse import _ckernels as kernels
    except ImportError:  # extension not built
        kernels = _pykernels

BACKEND = kernels.NAME
