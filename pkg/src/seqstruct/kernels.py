"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; set
``SEQSTRUCT_KERNELS=python`` to force the fallback.
"""

import os

from seqstruct import _pykernels

if os.environ.get("SEQSTRUCT_KERNELS", "").lower() == "python":
    _impl = _pykernels
else:
    try:
        from seqstruct import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

count_windows = _impl.count_windows
kcore_mask = _impl.kcore_mask

__all__ = ["BACKEND", "count_windows", "kcore_mask"]
