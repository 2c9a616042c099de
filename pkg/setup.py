"""Build script for the compiled kernel extension.

The extension is optional at runtime: ftact.kernels falls back to the pure
NumPy/Python reference implementation when the compiled module is missing.
-ffp-contract=off keeps C arithmetic bit-identical to the Python reference
(no FMA contraction), which the kernel parity tests rely on.
"""

from pathlib import Path

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if not Path("src/ftact/kernels/_core.pyx").exists():
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "ftact.kernels._core",
                ["src/ftact/kernels/_core.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-builtin"],
            )
        ],
        language_level=3,
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
