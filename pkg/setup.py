"""Builds the optional Cython benchmark kernel; the package works without it."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("ACOUSTOPT_PURE_PYTHON") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("acoustopt._core", ["src/acoustopt/_core.pyx"],
                       include_dirs=[np.get_include()], extra_compile_args=["-O2"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        print("Cython or numpy unavailable at build time; using the numpy fallback")

setup(ext_modules=ext_modules)
