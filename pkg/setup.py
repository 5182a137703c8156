"""Build the optional compiled core.

The extension is optional: if Cython or a C compiler is missing the package
still installs and falls back to the pure-Python kernels.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "sniffy._core",
                ["src/sniffy/_core.pyx"],
                include_dirs=[np.get_include()],
                # keep float semantics identical to the Python fallback
                extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
