"""Select the compiled kernel module if it was built, else the numpy one.

Set ``QIB_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from qib import _kernels_py

NAME = "python"
kernels = _kernels_py

if os.environ.get("QIB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from qib import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        NAME = "cython"
