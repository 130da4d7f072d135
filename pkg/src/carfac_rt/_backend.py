"""Pick the compiled kernels when available, else the pure-Python twin.

Set ``CARFAC_RT_PURE=1`` to force the fallback.
"""

import importlib
import os

_PURE = "carfac_rt._pykernels"
_COMPILED = "carfac_rt._kernels"


def _load_default():
    if os.environ.get("CARFAC_RT_PURE", "") not in ("", "0"):
        return importlib.import_module(_PURE)
    try:
        return importlib.import_module(_COMPILED)
    except ImportError:
        return importlib.import_module(_PURE)


default = _load_default()
name = "compiled" if default.__name__ == _COMPILED else "python"


def compiled_available():
    try:
        importlib.import_module(_COMPILED)
    except ImportError:
        return False
    return True


def get(backend=None):
    """Return a kernel module: None -> default, 'python' or 'compiled'."""
    if backend is None:
        return default
    if backend == "python":
        return importlib.import_module(_PURE)
    if backend == "compiled":
        return importlib.import_module(_COMPILED)
    if hasattr(backend, "run_float"):
        return backend
    raise ValueError(f"unknown backend {backend!r}")
