"""Build script: compiles the optional fused evaluation kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile must not fail the install.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "neutdiff.kernels._fused",
        ["src/neutdiff/kernels/_fused.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        optional=True,
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
