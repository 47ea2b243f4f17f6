"""Raster coverage kernels with backend selection at import.

The compiled Cython kernel is preferred; the vectorized numpy implementation
is the fallback. Set IFACEUV_KERNELS=python (or =compiled) to force one.
Both expose the same ``rasterize_barycentric`` contract and produce
identical buffers.
"""

import os

from . import _raster_py

_FORCE = os.environ.get("IFACEUV_KERNELS", "").strip().lower()

if _FORCE == "python":
    _impl = _raster_py
    BACKEND = "python"
else:
    try:
        from . import _raster_c as _impl
        BACKEND = "compiled"
    except ImportError:
        if _FORCE == "compiled":
            raise
        _impl = _raster_py
        BACKEND = "python"

rasterize_barycentric = _impl.rasterize_barycentric


def backend_name():
    return BACKEND
