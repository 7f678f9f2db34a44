import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "stochwave._core._speedups",
                ["src/stochwave/_core/_speedups.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # pure-Python install still works; the solver falls back to the numpy kernels
    extensions = []

setup(ext_modules=extensions)
