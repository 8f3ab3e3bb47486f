"""Hot-kernel dispatch: numba-compiled loops when available, numpy otherwise.

Set EEG4D_DISABLE_NUMBA=1 before import to force the pure-numpy path.
Both paths implement identical contracts; see benchmarks/bench_kernels.py
for a side-by-side timing comparison.
"""

import os

from . import numpy_impl

_disabled = os.environ.get("EEG4D_DISABLE_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on"
}

if _disabled:
    _impl = numpy_impl
    NUMBA_ACTIVE = False
else:
    try:
        from . import numba_impl as _impl
        NUMBA_ACTIVE = True
    except ImportError:
        _impl = numpy_impl
        NUMBA_ACTIVE = False

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_kernel = _impl.conv2d_backward_kernel
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward

__all__ = [
    "NUMBA_ACTIVE",
    "conv2d_forward",
    "conv2d_backward_input",
    "conv2d_backward_kernel",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
]
