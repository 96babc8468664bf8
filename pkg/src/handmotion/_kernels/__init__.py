"""Kernel backend selection.

The compiled Cython extension is preferred; the pure-numpy implementation is
the fallback when the extension was not built or when HANDMOTION_PURE=1 is
set in the environment. Both expose the same three functions:

    conv_forward(x, w, b, dilation)
    conv_backward(x, w, grad_y, dilation)
    conv_step(taps, w, b)

`benchmarks/bench_kernels.py` compares the two implementations.
"""

from __future__ import annotations

import os

from . import numpy_backend

if os.environ.get("HANDMOTION_PURE", "") == "1":
    backend = numpy_backend
    HAVE_EXT = False
else:
    try:
        from . import _cconv as backend  # type: ignore[no-redef]

        HAVE_EXT = True
    except ImportError:
        backend = numpy_backend
        HAVE_EXT = False

BACKEND_NAME: str = backend.NAME
conv_forward = backend.conv_forward
conv_backward = backend.conv_backward
conv_step = backend.conv_step

__all__ = [
    "BACKEND_NAME",
    "HAVE_EXT",
    "backend",
    "conv_backward",
    "conv_forward",
    "conv_step",
    "numpy_backend",
]
