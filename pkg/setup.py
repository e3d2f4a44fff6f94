"""Build the optional compiled stepping kernel.

The package works without it: ``beamstab.pdesim.kernels`` falls back to a
pure-Python loop when the extension is missing.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("BEAMSTAB_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "beamstab.pdesim._kernels",
                    ["src/beamstab/pdesim/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
