"""Build script: compiles the optional Cython raster kernels.

The package works without the extension (a numpy fallback is selected at
import time), so any build failure here downgrades to a pure-Python install
instead of aborting.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ifaceuv.kernels._raster_c",
                sources=["src/ifaceuv/kernels/_raster_c.pyx"],
                include_dirs=[numpy.get_include()],
                # -O2 without -ffast-math / -march=native: keeps IEEE
                # semantics identical to the numpy fallback.
                extra_compile_args=["-O2"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # noqa: BLE001
    sys.stderr.write(f"warning: raster extension disabled ({exc}); "
                     "falling back to pure-Python kernels\n")

setup(ext_modules=ext_modules)
