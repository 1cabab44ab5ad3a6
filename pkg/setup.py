"""Build the optional Cython kernels.

The package works without them: ``ladderlab.kernels`` falls back to the
NumPy implementations when the extension cannot be imported.
"""

import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("LADDERLAB_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "ladderlab._ckernels",
        ["src/ladderlab/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
