from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension("bkio._lz4core", ["src/bkio/_lz4core.pyx"]),
]

setup(ext_modules=cythonize(extensions, language_level="3"))
