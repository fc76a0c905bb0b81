import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # The package still works without the compiled kernels; the numpy
    # fallback is selected at import time.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "vegagen.neural._kernels_cy",
                ["src/vegagen/neural/_kernels_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
