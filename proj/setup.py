"""CMake-driven build of the pybind11 extension.

scikit-build-core would normally own this, but it is unavailable in the
build environment, so a small build_ext shim drives CMake instead. Use
`pip install -e . --no-build-isolation`.
"""

import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        out_dir = Path(self.get_ext_fullpath(ext.name)).resolve().parent
        build_dir = Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)
        src_dir = Path(__file__).resolve().parent
        args = [
            "cmake",
            str(src_dir),
            "-DLIGHTHCG_PYTHON=ON",
            "-DCMAKE_BUILD_TYPE=Release",
            f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={out_dir}",
        ]
        try:
            # Prefer the pip-installed pybind11; system copies can predate
            # NumPy 2.x and crash at runtime.
            import pybind11

            args.append(f"-Dpybind11_DIR={pybind11.get_cmake_dir()}")
        except ImportError:
            pass
        subprocess.check_call(
            args,
            cwd=build_dir,
        )
        subprocess.check_call(
            ["cmake", "--build", str(build_dir), "--target", "_core"],
            cwd=build_dir,
        )


setup(
    ext_modules=[CMakeExtension("lighthcg._core")],
    cmdclass={"build_ext": CMakeBuild},
)
