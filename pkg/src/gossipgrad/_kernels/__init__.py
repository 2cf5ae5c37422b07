"""Simulation kernels: compiled Cython core with a pure-numpy fallback.

The compiled backend is selected automatically at import when the extension
built; both expose the same ``run_rounds`` contract and are interchangeable
(see benchmarks/bench_kernels.py for a speed comparison).
"""

from __future__ import annotations

from ..errors import ParameterError
from . import _python

try:
    from . import _core

    HAVE_COMPILED = True
except ImportError:  # extension not built; numpy fallback only
    _core = None
    HAVE_COMPILED = False

DEFAULT_BACKEND = "compiled" if HAVE_COMPILED else "python"

ALGO_DSGD = _python.ALGO_DSGD
ALGO_DATSGD = _python.ALGO_DATSGD
SCHED_CONSTANT = _python.SCHED_CONSTANT
SCHED_LINEAR = _python.SCHED_LINEAR
SCHED_FIXED_GAMMA = _python.SCHED_FIXED_GAMMA


def available_backends() -> tuple[str, ...]:
    return ("python", "compiled") if HAVE_COMPILED else ("python",)


def get_kernel(name: str | None = None):
    """Kernel module for a backend name; None selects the default."""
    name = name or DEFAULT_BACKEND
    if name == "python":
        return _python
    if name == "compiled":
        if not HAVE_COMPILED:
            raise ParameterError("compiled kernel is not built; available backend: python")
        return _core
    raise ParameterError(f"unknown backend {name!r}; available: {available_backends()}")
