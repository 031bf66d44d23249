"""Select the compiled kernel or the numpy fallback at import time.

Set ``PHIPSIM_PURE=1`` to force the fallback.
"""
import os

from . import _kernel_py

BACKEND = "python"
midpoint_evolve = _kernel_py.midpoint_evolve

if os.environ.get("PHIPSIM_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernel
    except ImportError:  # extension not built
        pass
    else:
        midpoint_evolve = _kernel.midpoint_evolve
        BACKEND = "cython"
