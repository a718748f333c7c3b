"""Builds the optional compiled kernel extension.

The package works without it: ridkit.backend falls back to the numpy
implementations in ridkit._pykernels when ridkit._ckernels is missing.
"""

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ridkit._ckernels",
                ["src/ridkit/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no FP contraction: the compiled kernels must round exactly
                # like the numpy fallback so either backend gives the same
                # trained models on arithmetic-only kernels
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
