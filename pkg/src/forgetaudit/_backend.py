"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy versions.
Set ``FORGETAUDIT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

kernels = _pykernels
if os.environ.get("FORGETAUDIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as kernels  # noqa: F811
    except ImportError:  # extension not built
        kernels = _pykernels

BACKEND = kernels.NAME


def available():
    """Names of the backends importable in this environment."""
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        pass
    else:
        names.append("cython")
    return names


def get(name):
    """Return the kernel module called ``name`` ("python" or "cython")."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
