"""Uniform-frequency (centre of inertia) model in closed form.

While PFR is still ramping (``0 <= t <= T_g``)::

    df(t) = R t / (D' T_g) + (2 H R + D' T_g P_L) / (D'^2 T_g) * (exp(-D' t / 2H) - 1)

Evaluated below in a form that stays accurate as ``D' -> 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import FaultSpec, SystemModel


@dataclass(frozen=True)
class CoiParams:
    H: float  # MW s
    D_prime: float  # MW/Hz
    R: float  # MW
    P_L: float  # MW
    T_g: float  # s

    @property
    def rate(self) -> float:
        """Decay rate ``D' / 2H`` of the exponential term (1/s)."""
        return self.D_prime / (2.0 * self.H)


def aggregate(system: SystemModel, fault: FaultSpec) -> CoiParams:
    """Sum inertia, damping and response (response only flows after a loss)."""
    return CoiParams(
        H=sum(r.H for r in system.regions),
        D_prime=sum(r.D_prime for r in system.regions),
        R=sum(r.R for r in system.regions) if fault.P_L != 0.0 else 0.0,
        P_L=fault.P_L,
        T_g=system.T_g,
    )


def _phi1(x):
    # (1 - exp(-x)) / x
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2.0, -np.expm1(-xs) / xs)


def _phi2(x):
    # (exp(-x) - 1 + x) / x**2
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    series = 0.5 - x / 6.0 + x * x / 24.0 - x**3 / 120.0
    return np.where(small, series, (np.expm1(-xs) + xs) / (xs * xs))


def _check_t(p: CoiParams, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12) or np.any(t > p.T_g * (1 + 1e-12)):
        raise ValueError(f"t outside the ramp regime [0, {p.T_g}]")
    return t


def coi_frequency(p: CoiParams, t):
    """COI frequency deviation (Hz) at ``t`` in ``[0, T_g]``; scalar or array."""
    t = _check_t(p, t)
    x = p.rate * t
    out = p.R * t * t * _phi2(x) / (2.0 * p.H * p.T_g) - p.P_L * t * _phi1(x) / (2.0 * p.H)
    return float(out) if out.ndim == 0 else out


def coi_rocof(p: CoiParams, t):
    """Time derivative of :func:`coi_frequency` (Hz/s)."""
    t = _check_t(p, t)
    x = p.rate * t
    out = p.R * t * _phi1(x) / (2.0 * p.H * p.T_g) - p.P_L * np.exp(-x) / (2.0 * p.H)
    return float(out) if out.ndim == 0 else out


def coi_nadir(p: CoiParams, xtol: float = 1e-10) -> tuple[float, float]:
    """Return ``(t_star, nadir)`` on ``(0, T_g]``.

    The derivative is increasing in ``t``, so it has at most one root; it
    is bracketed and solved with ``brentq``.  Without an interior root the
    nadir is at ``T_g``.
    """
    if p.P_L <= 0:
        return 0.0, 0.0
    d_end = coi_rocof(p, p.T_g)
    if d_end <= 0:
        t_star = p.T_g
    else:
        t_star = brentq(lambda t: coi_rocof(p, t), 0.0, p.T_g, xtol=xtol, rtol=4 * np.finfo(float).eps)
    return float(t_star), float(coi_frequency(p, t_star))
