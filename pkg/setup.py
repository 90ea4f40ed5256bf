import os

from setuptools import setup

ext_modules = []
if os.environ.get("RJSTOPOVER_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        import numpy as np
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "rjstopover._ckernels",
                    ["src/rjstopover/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
