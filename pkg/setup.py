"""Build the optional compiled kernels.

If Cython or a C compiler is missing the package still installs and falls
back to the numpy kernels at import time.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:
    pass
else:
    ext_modules = cythonize(
        [
            Extension(
                "gridpop._ckernels",
                ["src/gridpop/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no FMA contraction: results must match the numpy fallback bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
