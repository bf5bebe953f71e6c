import os

import numpy as np
from setuptools import Extension, setup

# OCNLME_PURE=1 skips the compiled core; the package then runs on the NumPy fallback.
if os.environ.get("OCNLME_PURE") == "1":
    ext_modules = []
else:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "ocnlme._lqcore",
                ["src/ocnlme/_lqcore.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
