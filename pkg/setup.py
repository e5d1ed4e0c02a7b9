import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; genrbf falls back to _pycore
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("GENRBF_NO_EXT"):
    openmp = [] if os.environ.get("GENRBF_NO_OPENMP") else ["-fopenmp"]
    extensions = [
        Extension(
            "genrbf._core",
            ["src/genrbf/_core.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"] + openmp,
            extra_link_args=openmp,
            optional=True,
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
