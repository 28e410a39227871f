import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.path.exists("src/quantprecode/gnn_core/_fast.pyx"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "quantprecode.gnn_core._fast",
                    sources=["src/quantprecode/gnn_core/_fast.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # Pure-python fallback is selected at import time when the extension
        # is missing, so a cython-less install still works.
        ext_modules = []

setup(ext_modules=ext_modules)
