import numpy as np
from setuptools import setup, Extension

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        Extension(
            "illiquid._gridcore",
            ["src/illiquid/_gridcore.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        ),
        language_level=3,
    )
except ImportError:
    # pure-python fallback in illiquid.gridops is used when the extension is absent
    ext_modules = []

setup(ext_modules=ext_modules)
