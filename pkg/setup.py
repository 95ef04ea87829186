import os

from setuptools import setup

ext_modules = []
if os.environ.get("PARAPET_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "parapet._kernels",
                    ["src/parapet/_kernels.pyx"],
                    # no FMA contraction: keeps results bit-identical to the Python twin
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
