"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The compiled extension (`_ckernels`, Cython) is preferred; when it is not
built, the numpy/scipy implementations in `_pykernels` are used instead.
Set WHED_KERNELS=python or WHED_KERNELS=cython to force a backend.
"""

from __future__ import annotations

import os

from . import _pykernels

_choice = os.environ.get("WHED_KERNELS", "").strip().lower()

if _choice == "python":
    _impl = _pykernels
    BACKEND = "python"
elif _choice == "cython":
    from . import _ckernels as _impl  # noqa: F401  (ImportError here is deliberate)

    BACKEND = "cython"
elif _choice == "":
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"
else:
    raise ImportError(f"WHED_KERNELS must be 'python' or 'cython', got {_choice!r}")

scan_frames = _impl.scan_frames
biquad_apply = _impl.biquad_apply
moving_average = _impl.moving_average

FRAME_SIZE = _pykernels.FRAME_SIZE
HEADER = _pykernels.HEADER
MAX_COUNT = _pykernels.MAX_COUNT
