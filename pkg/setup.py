import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ERGOREG_NO_EXTENSION", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        # pure-Python fallback is selected at import time
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "ergoreg._kernels",
                    ["src/ergoreg/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    libraries=["m"],
                    extra_compile_args=["-O3", "-march=native"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
