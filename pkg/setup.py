"""Build script.

The only reason this file exists is the optional Cython extension holding the
tridiagonal Crank-Nicolson sweep. If Cython or a C compiler is unavailable the
build silently falls back to the pure NumPy backend; set PSTAB_PURE_PYTHON=1 to
skip the extension on purpose.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PSTAB_PURE_PYTHON") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "pstab._kernels._cn_cy",
                    ["src/pstab/_kernels/_cn_cy.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except Exception as exc:  # pragma: no cover - depends on build host
        print(f"pstab: skipping compiled kernel ({exc}); pure Python backend will be used")

setup(ext_modules=ext_modules)
