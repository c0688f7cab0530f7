"""Backend selection for the integration kernel.

The compiled extension is used when it imports; otherwise the numpy
implementation.  Set ``REGFREQ_BACKEND=python`` to force the fallback.
"""
import os

from . import _rk4_py

BACKEND = "python"
integrate = _rk4_py.integrate

if os.environ.get("REGFREQ_BACKEND", "").lower() != "python":
    try:
        from . import _rk4
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        integrate = _rk4.integrate


def get_integrator(name: str | None = None):
    """Return the integrator for ``name`` ("cython" or "python"; default: active)."""
    if name is None:
        return integrate
    if name == "python":
        return _rk4_py.integrate
    if name == "cython":
        from . import _rk4

        return _rk4.integrate
    raise ValueError(f"unknown backend {name!r}")
