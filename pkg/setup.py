"""Build the optional compiled kernels; the package works without them."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("CARFAC_RT_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension(
                "carfac_rt._kernels",
                ["src/carfac_rt/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # no FMA contraction: the kernels must match the Python twin bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
            )],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
