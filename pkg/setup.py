"""Build the optional Cython kernel core.

The package runs without it: ``sexismkit.kernels`` falls back to numpy
implementations when the compiled module cannot be imported.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SEXISMKIT_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "sexismkit._ckernels",
                    ["src/sexismkit/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
