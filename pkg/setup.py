"""Build script: compiles the optional Cython core.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so a failed compile only costs speed.
"""

import os
import sys

from setuptools import setup


def extensions():
    if not os.path.exists("src/scanbudget/_native.pyx"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "scanbudget._native",
        sources=["src/scanbudget/_native.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level="3")


try:
    setup(ext_modules=extensions())
except SystemExit:
    raise
except Exception as exc:  # fall back to a pure-python install
    print(f"warning: building scanbudget._native failed ({exc}); "
          "installing without the compiled core", file=sys.stderr)
    setup()
