import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "memsnn._ckernel",
        ["src/memsnn/_ckernel.pyx"],
        include_dirs=[np.get_include()],
        # keep IEEE rounding so results match the Python fallback
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
