"""Kernel backend selection.

The compiled extension is used when it imports; ``DRDAM_BACKEND=python``
forces the numpy fallback. Both expose the same functions.
"""
import os

from . import _fallback

if os.environ.get("DRDAM_BACKEND", "").lower() == "python":
    kernels = _fallback
    NAME = "python"
else:
    try:
        from . import _kernels as kernels
        NAME = "compiled"
    except ImportError:  # extension not built
        kernels = _fallback
        NAME = "python"

__all__ = ["kernels", "NAME"]
