"""Select the merge-loop backend at import time.

The compiled extension is used when it was built; set
``EVOMASK_PURE_PYTHON=1`` to force the NumPy fallback.
"""
from __future__ import annotations

import os

from . import _merge_py

try:
    from . import _merge_ext
except ImportError:  # extension not built
    _merge_ext = None

if _merge_ext is not None and not os.environ.get("EVOMASK_PURE_PYTHON"):
    merge_loop = _merge_ext.merge_loop
    BACKEND = "cython"
else:
    merge_loop = _merge_py.merge_loop
    BACKEND = "python"

BACKENDS = {"python": _merge_py.merge_loop}
if _merge_ext is not None:
    BACKENDS["cython"] = _merge_ext.merge_loop
