import os

from setuptools import setup

ext_modules = []
if not os.environ.get("DELICOCO_NO_EXT"):
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
                    "delicoco._kernels",
                    ["src/delicoco/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: keeps results bit-identical to the numpy path
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
