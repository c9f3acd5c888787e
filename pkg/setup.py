"""Build script: compiles the optional fast-kernel extension.

The package works without the extension (a pure-numpy backend is selected at
import time), so a failed compile only costs speed. Set DECOYFORGE_NO_EXT=1 to
skip the build explicitly.
"""

import os
import sys

from setuptools import setup

ext_modules = []
if not os.environ.get("DECOYFORGE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "decoyforge._kernels._fast",
                    ["src/decoyforge/_kernels/_fast.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level="3",
        )
    except Exception as exc:  # pragma: no cover - build-env dependent
        sys.stderr.write(f"decoyforge: skipping fast kernels ({exc}); using numpy backend\n")
        ext_modules = []

setup(ext_modules=ext_modules)
