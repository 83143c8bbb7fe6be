"""Builds the optional compiled kernel extension.

The package works without it (numpy fallbacks are selected at import time),
so a missing compiler or Cython only costs speed.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "flowfold._kernels._native",
                sources=["src/flowfold/_kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off keeps results bit-identical to the
                # numpy fallback (no FMA contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
