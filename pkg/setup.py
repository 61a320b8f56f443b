"""Build script for the optional compiled training kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so a missing Cython or a failing C compiler only costs speed.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "magicquad._sweep",
                ["src/magicquad/_sweep.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
