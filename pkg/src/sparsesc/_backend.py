"""Pick the column-kernel backend at import time.

The compiled extension is used when it was built; setting ``SPARSESC_PURE_PYTHON=1``
forces the pure-Python fallback.
"""

import os

from . import _fallback

PURE = _fallback

if os.environ.get("SPARSESC_PURE_PYTHON", "") not in ("", "0"):
    kernels = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _fallback
        BACKEND = "python"

COMPILED = None
try:
    from . import _kernels as COMPILED
except ImportError:
    pass
