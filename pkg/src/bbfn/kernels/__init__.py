"""Hot kernels behind the autodiff ops.

The backend is picked once at import from ``BBFN_KERNELS`` (``numba`` or
``numpy``). ``numba`` is the default when it imports cleanly; anything else
falls back to the vectorised numpy path.
"""

import logging
import os

from . import _numpy

log = logging.getLogger(__name__)

_requested = os.environ.get("BBFN_KERNELS", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"BBFN_KERNELS must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        log.warning("numba unavailable, using numpy kernels")
        _impl = _numpy
        BACKEND = "numpy"
else:
    _impl = _numpy
    BACKEND = "numpy"

gru_scan_forward = _impl.gru_scan_forward
gru_scan_backward = _impl.gru_scan_backward
layer_norm_forward = _impl.layer_norm_forward
layer_norm_backward = _impl.layer_norm_backward
softmax_forward = _impl.softmax_forward
softmax_backward = _impl.softmax_backward

__all__ = [
    "BACKEND",
    "gru_scan_forward",
    "gru_scan_backward",
    "layer_norm_forward",
    "layer_norm_backward",
    "softmax_forward",
    "softmax_backward",
]
