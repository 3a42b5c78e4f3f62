"""Build the optional compiled merge kernel; the package falls back to NumPy without it."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("EVOMASK_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "evomask._merge_ext",
                    ["src/evomask/_merge_ext.pyx"],
                    # no FMA contraction: results must match the NumPy fallback bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
