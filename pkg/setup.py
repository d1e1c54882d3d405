"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a pure-Python
backend with identical numerics is selected at import time), so any
failure to build it is downgraded to a warning rather than an error.
"""

import warnings

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "heavytail_opt._kernels",
                ["src/heavytail_opt/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    warnings.warn(
        f"Cython kernel build skipped ({exc!r}); falling back to pure Python backend."
    )
    ext_modules = []

setup(ext_modules=ext_modules)
