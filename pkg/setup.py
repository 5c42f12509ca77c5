"""Build the optional compiled kernel for the RL hot loop.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes per-case policy updates several times
faster. Set EARLYWARN_SKIP_EXTENSION=1 to install pure-Python only.
"""

import os

from setuptools import Extension, setup

if os.environ.get("EARLYWARN_SKIP_EXTENSION") == "1":
    ext_modules = []
else:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "earlywarn.rl._kernels",
                ["src/earlywarn/rl/_kernels.pyx"],
                extra_compile_args=["-O3", "-ffast-math", "-march=native"],
                extra_link_args=["-lmvec", "-lm"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
