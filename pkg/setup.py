"""Builds the optional Cython kernel for the switching-bridge simulator.

If Cython or a C compiler is unavailable the package installs without the
extension and falls back to the pure-Python kernel at import time.
"""
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing: install pure-Python only
            print(f"warning: C extension build skipped ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc})")


def extensions():
    import os

    if not os.path.exists("src/thyrsim/switching/_cykernel.pyx"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        [
            Extension(
                "thyrsim.switching._cykernel",
                ["src/thyrsim/switching/_cykernel.pyx"],
            )
        ],
        language_level="3",
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
