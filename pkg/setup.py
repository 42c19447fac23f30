import os

from setuptools import setup

# The compiled kernels are an optional speedup: if Cython or a C toolchain is
# missing, the package installs anyway and aigflow.kernels falls back to the
# pure-numpy implementations at import time.
ext_modules = []
if os.environ.get("AIGFLOW_SKIP_EXT", "") not in ("1", "true"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "aigflow._ckern",
                    ["src/aigflow/_ckern.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
