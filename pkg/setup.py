"""Build the optional compiled sampler kernels.

The extension is marked optional: if compilation fails the package still
installs and falls back to the numpy kernels.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "slowfast_is.engine._kernels",
        ["src/slowfast_is/engine/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
