"""Build script for the compiled kernel extension.

The extension is optional: if compilation fails the package still installs
and ``qtomo.kernels`` falls back to the numpy implementation.
"""

import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

openmp = os.environ.get("QTOMO_NO_OPENMP", "") in ("", "0")
flags = ["-O3", "-fopenmp"] if openmp else ["-O3"]

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "qtomo._ckernels",
                [os.path.join("src", "qtomo", "_ckernels.pyx")],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=flags,
                extra_link_args=["-fopenmp"] if openmp else [],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
