import os

import numpy as np
from setuptools import Extension, setup

# Skip the compiled core when Cython is missing; the package falls back to pure Python.
try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("SPARSESC_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "sparsesc._kernels",
                ["src/sparsesc/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
