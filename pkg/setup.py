import os

import numpy as np
from setuptools import Extension, setup

# SEQSTRUCT_NO_EXT=1 builds the pure-Python package only.
ext_modules = []
if not os.environ.get("SEQSTRUCT_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "seqstruct._ckernels",
                    ["src/seqstruct/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    language="c++",
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
