"""Kernel backend selection: compiled core with a pure-numpy fallback.

Set IRISTWIN_PURE_PYTHON=1 before import to force the fallback.
"""
import os

from . import _ops_py

try:
    from . import _ops_cy
except ImportError:
    _ops_cy = None

_FORCE_PY = os.environ.get("IRISTWIN_PURE_PYTHON", "") == "1"
_active = _ops_py if (_ops_cy is None or _FORCE_PY) else _ops_cy

HAVE_COMPILED = _ops_cy is not None
BACKEND = "python" if _active is _ops_py else "compiled"

response_grid = _active.response_grid
fill_masked = _active.fill_masked
bilinear_clamped = _ops_py.bilinear_clamped


def get_backend(name: str):
    """Return a specific backend module ("python" or "compiled")."""
    if name == "python":
        return _ops_py
    if name == "compiled":
        if _ops_cy is None:
            raise ImportError("compiled kernels are not built")
        return _ops_cy
    raise ValueError(f"unknown backend {name!r}")
