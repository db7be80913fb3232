"""Build script: compiles the optional DTW kernel extension.

The package is fully functional without the extension (a pure-Python
fallback is selected at import time), so a failed compile downgrades to a
warning instead of aborting the install.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, headers, ...
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: compiled kernel build failed ({exc}); "
            "falling back to the pure-Python DTW implementation",
            file=sys.stderr,
        )


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"warning: {exc}; skipping compiled kernel", file=sys.stderr)
        return []
    ext = Extension(
        "signscore._kernels._dtw_core",
        ["src/signscore/_kernels/_dtw_core.pyx"],
        include_dirs=[numpy.get_include()],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})
