"""Build script for the optional compiled simplex kernels.

The extension is a pure speedup: if Cython or a C compiler is missing the
install still succeeds and the package falls back to the numpy kernels at
import time (see railbridge.milp.kernels).
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "railbridge.milp._kernels",
                ["src/railbridge/milp/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build host
    import sys

    print(f"railbridge: compiled kernels skipped ({exc}); using numpy fallback", file=sys.stderr)

setup(ext_modules=ext_modules)
