import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and os.environ.get("FRNET_NO_EXT") != "1":
    ext_modules = cythonize(
        [
            Extension(
                "frnet.kernels._conv_c",
                ["src/frnet/kernels/_conv_c.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-march=native"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
