import os

from setuptools import Extension, setup

# The compiled kernels are optional: if Cython is unavailable (or ADASKIP_PURE=1
# is set) the package installs without them and falls back to the numpy kernels
# at import time.
ext_modules = []
if os.environ.get("ADASKIP_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("adaskip._kernels", sources=["src/adaskip/_kernels.pyx"],
                       extra_compile_args=["-O3"])],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "embedsignature": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
