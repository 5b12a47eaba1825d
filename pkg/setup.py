"""Build script for the compiled kernel core.

The extension is optional: when it cannot be built the package falls back to
the pure-Python kernels in ``srnmlmc._pykernels``.
"""
import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

# fp-contract=off keeps the compiled arithmetic bit-identical to the
# pure-Python fallback (no fused multiply-add).
COMPILE_ARGS = ["-O3", "-ffp-contract=off", "-fno-fast-math"]

ext_modules = []
if cythonize is not None and not os.environ.get("SRNMLMC_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "srnmlmc._ckernels",
                [os.path.join("src", "srnmlmc", "_ckernels.pyx")],
                include_dirs=[np.get_include()],
                extra_compile_args=COMPILE_ARGS,
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
