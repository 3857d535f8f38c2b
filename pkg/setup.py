import numpy as np
from setuptools import Extension, setup

# The compiled kernel is optional: without Cython the package falls back to
# the pure-numpy implementation selected in sarwind.kernels.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sarwind._kernels",
                ["src/sarwind/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[np.get_include()],
)
