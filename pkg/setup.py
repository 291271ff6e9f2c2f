"""Build script for the optional compiled kernel.

The hot loops (population stepping, the coupled comparison-chain runner)
live in a Cython extension.  The build is marked optional: if no compiler
or Cython is available the package installs anyway and
``fitscape.backend`` falls back to the pure-Python kernel at import time.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "fitscape._speedups",
                ["src/fitscape/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
