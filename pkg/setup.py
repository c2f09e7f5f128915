import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

npyrandom = os.path.join(os.path.dirname(np.__file__), "random", "lib")

extensions = [
    Extension(
        "trajbasket._kernels",
        ["src/trajbasket/_kernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[npyrandom],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # no -ffast-math/-march=native: results must match the Python fallback bit for bit
        extra_compile_args=["-O2", "-ffp-contract=off"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
