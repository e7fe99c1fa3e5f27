"""Kernel selection.

The compiled Cython kernels are used when importable; set
``QFEDGD_KERNELS=python`` to force the numpy fallback.
"""
import os

from . import _kernels_py

NAME = "python"
kernels = _kernels_py

if os.environ.get("QFEDGD_KERNELS", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        NAME = "cython"


def use(name):
    """Switch kernels at runtime ('cython' or 'python'); used by the benchmark."""
    global kernels, NAME
    if name == "python":
        kernels, NAME = _kernels_py, "python"
    elif name == "cython":
        from . import _kernels as _compiled

        kernels, NAME = _compiled, "cython"
    else:
        raise ValueError(f"unknown kernel set {name!r}")
