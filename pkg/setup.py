"""Build script for the optional compiled rollout kernels.

Without Cython or a C compiler the package installs pure Python and uses the numpy
fallback in ``wsmpc._core``.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("wsmpc._core._kernels", ["src/wsmpc/_core/_kernels.pyx"],
                   include_dirs=[np.get_include()],
                   extra_compile_args=["-O3"])],
        language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)
