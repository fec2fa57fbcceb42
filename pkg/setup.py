from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("promosim.engine._kernel", ["src/promosim/engine/_kernel.pyx"],
                   include_dirs=[np.get_include()], extra_compile_args=["-O2"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # no Cython: install the pure-Python fallback only
    ext_modules = []

setup(ext_modules=ext_modules)
