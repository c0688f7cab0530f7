"""Time-domain simulation of the N-region coupled swing equations.

Per region ``i``::

    2 H_i d(df_i)/dt + D'_i df_i = FR_i(t) - P_L [i faulted] + dp_import_i(t)
    dp_import_i(t) = -sum_j T_ij (int df_i - int df_j)

The integro-differential system becomes an ODE by carrying ``int df_i`` in
the state.  Integration is fixed-step RK4 from a zero initial state.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .model import FaultSpec, RegionParams, SystemModel

DEFAULT_DT = 1e-3
DEFAULT_T_END = 30.0


@dataclass(frozen=True, eq=False)
class FrequencyTrace:
    region_ids: tuple[str, ...]
    dt: float
    t_end: float
    df: np.ndarray  # (samples, regions), Hz
    dp_import: np.ndarray  # (samples, regions), MW
    int_df: np.ndarray  # (samples, regions), Hz s
    H: tuple[float, ...] = ()

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.df.shape[0]) * self.dt

    def channel(self, region_id: str) -> np.ndarray:
        return self.df[:, self.region_ids.index(region_id)]

    def weighted_mean(self) -> np.ndarray:
        """Inertia-weighted mean frequency deviation ``f_w(t)``."""
        h = np.asarray(self.H)
        return self.df @ h / h.sum()

    def to_csv(self, path: str | Path | None = None) -> str:
        """CSV with header ``t,df_<r>...,dp_import_<r>...`` at full precision."""
        buf = io.StringIO()
        header = ["t"] + [f"df_{r}" for r in self.region_ids] + [f"dp_import_{r}" for r in self.region_ids]
        buf.write(",".join(header) + "\n")
        data = np.column_stack([self.t, self.df, self.dp_import])
        for row in data.tolist():
            buf.write(",".join(repr(v) for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass(frozen=True)
class TraceMetrics:
    rocof_max_abs: dict[str, float]
    nadir: dict[str, float]
    nadir_time: dict[str, float]
    qss: float

    @property
    def worst_rocof(self) -> float:
        return max(self.rocof_max_abs.values())

    @property
    def worst_nadir(self) -> float:
        return min(self.nadir.values())


def response_injection(t, region: RegionParams, T_g: float):
    """PFR ramp plus EFR ramp (1 s long, after the activation delay), MW.

    Accepts a scalar or an array of times.
    """
    t = np.asarray(t, dtype=float)
    out = region.R * np.clip(t / T_g, 0.0, 1.0) + region.EFR * np.clip(t - region.EFR_delay, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _arrays(system: SystemModel, fault: FaultSpec):
    regions = system.regions
    two_h = np.array([2.0 * r.H for r in regions])
    dprime = np.array([r.D_prime for r in regions])
    loss = np.zeros(len(regions))
    loss[system.index(fault.region)] = fault.P_L
    # response is armed by the loss: nothing is delivered without a fault
    armed = 1.0 if fault.P_L != 0.0 else 0.0
    r = armed * np.array([rg.R for rg in regions])
    efr = armed * np.array([rg.EFR for rg in regions])
    delay = np.array([rg.EFR_delay for rg in regions])
    arrs = (two_h, dprime, system.stiffness_matrix(), loss, r, efr, delay)
    return tuple(np.ascontiguousarray(a, dtype=float) for a in arrs)


def simulate(
    system: SystemModel,
    fault: FaultSpec,
    dt: float = DEFAULT_DT,
    t_end: float = DEFAULT_T_END,
    stride: int = 1,
    backend: str | None = None,
) -> FrequencyTrace:
    """Integrate the post-fault dynamics on ``[0, t_end]``.

    Samples are kept every ``stride`` steps.  Raises ``FloatingPointError``
    if the state becomes non-finite.
    """
    if not (dt > 0 and t_end > 0):
        raise ValueError("dt and t_end must be positive")
    nsteps = int(round(t_end / dt))
    if abs(nsteps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    if nsteps % stride:
        raise ValueError("number of steps must be a multiple of stride")
    integrate = kernels.get_integrator(backend)
    two_h, dprime, lap, loss, r, efr, delay = _arrays(system, fault)
    f, g = integrate(two_h, dprime, lap, loss, r, efr, delay, float(system.T_g), float(dt), nsteps, int(stride))
    f = np.asarray(f)
    g = np.asarray(g)
    dp = -(g @ lap.T)
    return FrequencyTrace(
        region_ids=tuple(system.region_ids),
        dt=dt * stride,
        t_end=nsteps * dt,
        df=f,
        dp_import=dp,
        int_df=g,
        H=tuple(rg.H for rg in system.regions),
    )


def rocof(trace: FrequencyTrace) -> np.ndarray:
    """Per-sample RoCoF (Hz/s): centred differences, second order at the ends."""
    if trace.df.shape[0] < 3:
        raise ValueError("trace shorter than 3 samples")
    return np.gradient(trace.df, trace.dt, axis=0, edge_order=2)


def trace_metrics(trace: FrequencyTrace) -> TraceMetrics:
    if trace.df.shape[0] < 3:
        raise ValueError("trace shorter than 3 samples")
    roc = np.abs(rocof(trace)).max(axis=0)
    k = np.argmin(trace.df, axis=0)
    nadir = trace.df[k, np.arange(trace.df.shape[1])]
    nadir = np.minimum(nadir, 0.0)
    t = k * trace.dt
    t = np.where(nadir < 0.0, t, 0.0)
    qss = float(trace.weighted_mean()[-1])
    ids = trace.region_ids
    return TraceMetrics(
        rocof_max_abs={r: float(v) for r, v in zip(ids, roc)},
        nadir={r: float(v) for r, v in zip(ids, nadir)},
        nadir_time={r: float(v) for r, v in zip(ids, t)},
        qss=qss,
    )


def initial_rocof(trace: FrequencyTrace) -> np.ndarray:
    """Second-order one-sided RoCoF estimate at ``t = 0`` per region."""
    f = trace.df
    return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * trace.dt)


def import_imbalance(trace: FrequencyTrace) -> float:
    """max_t |sum_i dp_import_i| relative to max |dp_import| (0 when no flow)."""
    scale = float(np.max(np.abs(trace.dp_import)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(trace.dp_import.sum(axis=1)))) / scale


def response_energy(t, region: RegionParams, T_g: float):
    """Exact integral of :func:`response_injection` from 0 to ``t`` (MW s)."""
    t = np.asarray(t, dtype=float)
    pfr = np.where(t < T_g, np.square(np.maximum(t, 0.0)) / (2.0 * T_g), t - T_g / 2.0)
    tau = np.maximum(t - region.EFR_delay, 0.0)
    efr = np.where(tau < 1.0, tau * tau / 2.0, tau - 0.5)
    out = region.R * pfr + region.EFR * efr
    return float(out) if out.ndim == 0 else out


def coi_identity_residual(trace: FrequencyTrace, system: SystemModel, fault: FaultSpec) -> np.ndarray:
    """Residual (Hz/s) of the summed swing equation at interior samples.

    Over ``[t_{n-1}, t_{n+1}]``::

        2 sum(H) (f_w(t_{n+1}) - f_w(t_{n-1}))
            = int (sum FR - P_L - sum D' df) dt

    with the import terms cancelled in the sum, the response integrated
    exactly and the damping term by Simpson's rule.  Divided by
    ``2 sum(H) * 2 dt`` so it reads as a RoCoF error.
    """
    h = np.array(trace.H)
    fw = trace.weighted_mean()
    dt = trace.dt
    t = trace.t
    if fault.P_L != 0.0:
        e = sum(response_energy(t, rg, system.T_g) for rg in system.regions)
        fr = e[2:] - e[:-2]
    else:
        fr = 0.0
    damp = trace.df @ np.array([rg.D_prime for rg in system.regions])
    damp_int = dt / 3.0 * (damp[:-2] + 4.0 * damp[1:-1] + damp[2:])
    lhs = 2.0 * h.sum() * (fw[2:] - fw[:-2])
    rhs = fr - fault.P_L * 2.0 * dt - damp_int
    return (lhs - rhs) / (2.0 * h.sum() * 2.0 * dt)


def state_matrix(system: SystemModel) -> np.ndarray:
    """Homogeneous system matrix for the state ``(df, int_df)``."""
    n = system.n_regions
    two_h = np.array([2.0 * r.H for r in system.regions])
    dp = np.array([r.D_prime for r in system.regions])
    lap = system.stiffness_matrix()
    a = np.zeros((2 * n, 2 * n))
    a[:n, :n] = -np.diag(dp / two_h)
    a[:n, n:] = -lap / two_h[:, None]
    a[n:, :n] = np.eye(n)
    return a


def settling_horizon(system: SystemModel, decades: float = 4.0) -> float:
    """Time after ``T_g`` (plus EFR delays) for transients to decay ``10**-decades``."""
    ev = np.linalg.eigvals(state_matrix(system))
    re = -ev.real[np.abs(ev) > 1e-12]
    slow = float(re.min()) if re.size else math.inf
    if slow <= 0:
        raise ValueError("system has non-decaying modes")
    t0 = system.T_g + max((r.EFR_delay + 1.0 for r in system.regions if r.EFR), default=0.0)
    return t0 + decades * math.log(10.0) / slow
