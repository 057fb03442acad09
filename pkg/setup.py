import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python fallback only
    cythonize = None

extensions = []
if cythonize is not None and not os.environ.get("DECAYLAB_NO_EXT"):
    extensions = cythonize(
        [
            Extension(
                "decaylab._ckernels",
                ["src/decaylab/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
