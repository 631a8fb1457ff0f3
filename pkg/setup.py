"""Build script: compiles the optional block-metric extension when Cython is present.

The package is fully functional without the extension; `uwbright.blockops`
falls back to the numpy implementation at import time.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "uwbright._blockops",
                sources=["src/uwbright/_blockops.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
