import os

import numpy as np
from setuptools import Extension, setup

# Kernels must round exactly like the numpy fallback: no FMA contraction, no fast-math.
COMPILE_ARGS = ["-O3", "-ffp-contract=off", "-fno-fast-math"]


def _extensions():
    if os.environ.get("TAYLORSDE_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "taylorsde._ckernels",
        ["src/taylorsde/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=COMPILE_ARGS,
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
