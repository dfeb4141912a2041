"""Select the compiled wave kernels when available, else the numpy fallback.

Set ``JEANS_BLOWUP_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
wave_rhs_1d = _kernels_py.wave_rhs_1d
wave_rhs_2d = _kernels_py.wave_rhs_2d

if os.environ.get("JEANS_BLOWUP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        wave_rhs_1d = _compiled.wave_rhs_1d
        wave_rhs_2d = _compiled.wave_rhs_2d


def get_backend(name: str | None = None):
    """Return (rhs_1d, rhs_2d) for ``"cython"``, ``"python"`` or the default."""
    if name is None:
        return wave_rhs_1d, wave_rhs_2d
    if name == "python":
        return _kernels_py.wave_rhs_1d, _kernels_py.wave_rhs_2d
    if name == "cython":
        from . import _kernels as _compiled
        return _compiled.wave_rhs_1d, _compiled.wave_rhs_2d
    raise ValueError(f"unknown backend {name!r}")
