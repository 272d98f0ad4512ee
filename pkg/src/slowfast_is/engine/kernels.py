"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  :func:`set_backend` switches explicitly (used by the benchmark
and the backend-agreement tests).
"""

from __future__ import annotations

import logging

from . import _kernels_py

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_active = _compiled if _compiled is not None else _kernels_py


def available_backends() -> tuple:
    return ("compiled", "python") if _compiled is not None else ("python",)


def backend() -> str:
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def set_backend(name: str) -> None:
    """Select ``"compiled"`` or ``"python"`` kernels for subsequent calls."""
    global _active
    if name == "python":
        _active = _kernels_py
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available; rebuild the package")
        _active = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    log.debug("kernel backend set to %s", name)


def em_step(*args):
    return _active.em_step(*args)


def periodic_cubic(coef, idx, y, period, out):
    return _active.periodic_cubic(coef, idx, y, period, out)
