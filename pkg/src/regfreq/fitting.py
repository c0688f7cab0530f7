"""Simulation sweeps, oscillation fits and conservative linear regressions.

A sweep samples system parameters inside given ranges, simulates each
operating point and extracts regression targets:

* ``Aw.<r>``          -- amplitude times angular frequency of the fitted
                         inter-area oscillation in region ``r`` (Hz/s); with
                         more than two regions the peak RoCoF of the part
                         the single fitted mode leaves unexplained is added
* ``int.<r>@<k>``     -- signed ``int_0^{t_k} df_r`` (Hz s)
* ``dint.<r>.<j>@<k>`` -- ``int_0^{t_k} int_0^t (df_r - df_j)`` (Hz s^2)
* ``int_hi`` / ``dint_hi`` -- the largest value of the above over
                         ``[t_{k-1}, t_k]`` (for interval-safe constraints)
* ``nadir.<r>``, ``rocof.<r>`` -- trace metrics

Linear models on the features below are then fitted by least squares and
shifted by their worst leave-one-out residual so that they bound the target
in the direction the constraint needs.

The feature set (``H``, ``Dp``, ``R``, ``T``, ``P_L`` plus the reciprocal
features ``invH``, ``PL_over_H`` per region and ``PL_over_Htot``) is this
package's own choice; model files label it as such.  Reciprocal features
are evaluated at the scheduling point and enter constraints as constants.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import tomli
from scipy.optimize import least_squares
from scipy.stats import qmc

from . import __version__
from .coi import aggregate, coi_frequency
from .dynamics import simulate, trace_metrics
from .laplace import OscillationMode, build_laplace_solution, extract_modes, partial_fractions
from .model import FaultSpec, SystemModel

FEATURE_SET_NOTE = "package-defined linear feature set (stand-in; not a published functional form)"

#: documented realistic parameter bounds (MW, MW s, MW/Hz, s)
REALISTIC_BOUNDS = {
    "H": (5e3, 150e3),
    "Dp": (100.0, 1500.0),
    "R": (0.0, 3e3),
    "EFR": (0.0, 1e3),
    "T": (1e3, 50e3),
    "P_L": (300.0, 1800.0),
}


class SweepError(ValueError):
    pass


class RegressionError(ValueError):
    pass


# -- sweep specification ---------------------------------------------------------


def default_time_grid(T_g: float, n: int = 10) -> tuple[float, ...]:
    return tuple(T_g * (k + 1) / n for k in range(n))


@dataclass(frozen=True)
class SweepSpec:
    """Parameter ranges and sampling settings.

    Range keys: ``H.<region>``, ``Dp.<region>`` (MW/Hz), ``R.<region>``,
    ``EFR.<region>``, ``T.<a>-<b>`` (line stiffness, MW) and ``P_L``.
    Anything not listed keeps its value from the base system.
    """

    ranges: Mapping[str, tuple[float, float]]
    count: int
    scheme: str = "lhs"  # lhs | grid | random
    seed: int = 0
    fault_regions: tuple[str, ...] = ()
    time_grid: tuple[float, ...] = ()
    dt: float = 1e-3
    t_end: float = 30.0
    strict_bounds: bool = True

    def validate(self, base: SystemModel) -> None:
        if self.count < 1:
            raise SweepError("count must be >= 1")
        if self.scheme not in ("lhs", "grid", "random"):
            raise SweepError(f"unknown sampling scheme {self.scheme!r}")
        ids = base.region_ids
        for key, (lo, hi) in self.ranges.items():
            kind, _, target = key.partition(".")
            if kind == "P_L":
                pass
            elif kind in ("H", "Dp", "R", "EFR"):
                if target not in ids:
                    raise SweepError(f"range {key}: unknown region")
            elif kind == "T":
                a, _, b = target.partition("-")
                if not any({ln.from_region, ln.to_region} == {a, b} for ln in base.lines):
                    raise SweepError(f"range {key}: no such line")
            else:
                raise SweepError(f"range {key}: unknown parameter")
            if not lo <= hi:
                raise SweepError(f"range {key}: lower bound above upper bound")
            if self.strict_bounds:
                blo, bhi = REALISTIC_BOUNDS[kind]
                if lo < blo or hi > bhi:
                    raise SweepError(f"range {key}=({lo}, {hi}) outside documented bounds ({blo}, {bhi})")
        for r in self.fault_regions:
            if r not in ids:
                raise SweepError(f"fault region {r!r} unknown")
        grid = self.grid(base)
        if any(not (0 < t <= base.T_g + 1e-12) for t in grid) or list(grid) != sorted(grid):
            raise SweepError("time grid must be ascending within (0, T_g]")

    def grid(self, base: SystemModel) -> tuple[float, ...]:
        return self.time_grid or default_time_grid(base.T_g)

    def faults(self, base: SystemModel) -> tuple[str, ...]:
        return self.fault_regions or (base.region_ids[-1],)

    def to_dict(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "scheme": self.scheme,
            "seed": self.seed,
            "fault_regions": list(self.fault_regions),
            "time_grid": list(self.time_grid),
            "dt": self.dt,
            "t_end": self.t_end,
            "strict_bounds": self.strict_bounds,
            "ranges": {k: [float(v[0]), float(v[1])] for k, v in self.ranges.items()},
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SweepSpec":
        known = {"count", "scheme", "seed", "fault_regions", "time_grid", "dt", "t_end", "strict_bounds", "ranges"}
        unknown = set(doc) - known
        if unknown:
            raise SweepError(f"unknown sweep key {sorted(unknown)[0]!r}")
        ranges = {k: (float(v[0]), float(v[1])) for k, v in dict(doc.get("ranges", {})).items()}
        return cls(
            ranges=ranges,
            count=int(doc.get("count", 1)),
            scheme=str(doc.get("scheme", "lhs")),
            seed=int(doc.get("seed", 0)),
            fault_regions=tuple(doc.get("fault_regions", ())),
            time_grid=tuple(float(t) for t in doc.get("time_grid", ())),
            dt=float(doc.get("dt", 1e-3)),
            t_end=float(doc.get("t_end", 30.0)),
            strict_bounds=bool(doc.get("strict_bounds", True)),
        )


def load_sweep_spec(path: str | Path) -> SweepSpec:
    doc = tomli.loads(Path(path).read_text())
    return SweepSpec.from_dict(doc.get("sweep", doc))


# -- features ------------------------------------------------------------------


def system_features(system: SystemModel, fault: FaultSpec) -> dict[str, float]:
    """Regression features of one operating point."""
    feats: dict[str, float] = {}
    for r in system.regions:
        feats[f"H.{r.id}"] = r.H
        feats[f"Dp.{r.id}"] = r.D_prime
        feats[f"R.{r.id}"] = r.R
        feats[f"EFR.{r.id}"] = r.EFR
        feats[f"invH.{r.id}"] = 1.0 / r.H
    seen = set()
    for ln in system.lines:
        key = "-".join(sorted((ln.from_region, ln.to_region)))
        if key not in seen:
            seen.add(key)
            feats[f"T.{key}"] = system.line_stiffness(ln.from_region, ln.to_region)
    feats["P_L"] = fault.P_L
    for r in system.regions:
        feats[f"PL_over_H.{r.id}"] = fault.P_L / r.H
    feats["PL_over_Htot"] = fault.P_L / sum(r.H for r in system.regions)
    return feats


def apply_parameters(base: SystemModel, values: Mapping[str, float]) -> SystemModel:
    """Copy of ``base`` with swept parameters (``P_L`` ignored here)."""
    system = base
    for key, v in values.items():
        kind, _, target = key.partition(".")
        if kind == "H":
            system = system.with_region(target, H=float(v))
        elif kind == "Dp":
            rg = system.region(target)
            system = system.with_region(target, D=float(v) / rg.P_D)
        elif kind == "R":
            system = system.with_region(target, R=float(v))
        elif kind == "EFR":
            system = system.with_region(target, EFR=float(v))
        elif kind == "T":
            a, _, b = target.partition("-")
            matches = [ln for ln in system.lines if {ln.from_region, ln.to_region} == {a, b}]
            share = float(v) / len(matches)
            lines = tuple(
                replace(ln, T=share) if {ln.from_region, ln.to_region} == {a, b} else ln for ln in system.lines
            )
            system = replace(system, lines=lines)
    return system


def sample_points(spec: SweepSpec, base: SystemModel) -> list[tuple[SystemModel, FaultSpec]]:
    """Deterministic operating points for ``spec``."""
    spec.validate(base)
    keys = sorted(spec.ranges)
    faults = spec.faults(base)
    dim = len(keys) + (1 if len(faults) > 1 else 0)
    if dim == 0:
        unit = np.zeros((spec.count, 0))
    elif spec.scheme == "lhs":
        unit = qmc.LatinHypercube(d=dim, seed=spec.seed).random(spec.count)
    elif spec.scheme == "random":
        unit = np.random.default_rng(spec.seed).random((spec.count, dim))
    else:
        levels = max(2, math.ceil(spec.count ** (1.0 / dim))) if spec.count > 1 else 1
        axes = [np.linspace(0.0, 1.0, levels) if levels > 1 else np.array([0.5])] * dim
        mesh = np.array(np.meshgrid(*axes, indexing="ij")).reshape(dim, -1).T
        unit = mesh[: spec.count]
    out = []
    default_pl = {r.id: r.P_L for r in base.regions}
    for row in unit:
        values = {}
        for k, key in enumerate(keys):
            lo, hi = spec.ranges[key]
            values[key] = lo + (hi - lo) * float(row[k])
        system = apply_parameters(base, values)
        if len(faults) > 1:
            fr = faults[min(int(row[-1] * len(faults)), len(faults) - 1)]
        else:
            fr = faults[0]
        pl = values.get("P_L", default_pl.get(fr) or 0.0)
        out.append((system, FaultSpec(fr, float(pl))))
    return out


# -- damped sinusoid fit -----------------------------------------------------------


@dataclass(frozen=True)
class SinusoidFit:
    mode: OscillationMode
    converged: bool
    residual_rms: float  # of the fitted signal, Hz
    unmodelled_energy: float  # sum of squared residuals * dt, Hz^2 s
    nfev: int


def _basis(t, a, w):
    e = np.exp(-a * t)
    return np.column_stack([e * np.sin(w * t), e * np.cos(w * t), np.ones_like(t)])


def _project(t, y, a, w):
    X = _basis(t, a, w)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta, y - X @ beta


def _spectral_peak(t, y) -> float:
    n = t.size
    dt = t[1] - t[0]
    yd = (y - y.mean()) * np.hanning(n)
    nfft = 1 << int(math.ceil(math.log2(64 * n)))
    spec = np.abs(np.fft.rfft(yd, nfft))
    freqs = 2.0 * math.pi * np.fft.rfftfreq(nfft, dt)
    spec[0] = 0.0
    return float(freqs[int(np.argmax(spec))])


def _envelope_rate(t, y) -> float:
    z = np.abs(y - y.mean())
    k = max(3, t.size // 4)
    head, tail = z[:k].max(), z[-k:].max()
    if head <= 0 or tail <= 0:
        return 0.05
    return max(float(math.log(head / tail) / (t[-1] - t[0]) * 4.0 / 3.0), 0.0)


def fit_damped_sinusoid(
    t: np.ndarray,
    y: np.ndarray,
    max_points: int = 2001,
    xtol: float = 1e-8,
    max_nfev: int = 400,
) -> SinusoidFit:
    """Least-squares fit of ``exp(-a t) A sin(omega t + phi) + C``.

    The amplitude, phase and offset enter linearly, so the search runs
    over ``(a, omega)`` only (variable projection), started from the
    spectral peak, the log-envelope slope and a coarse frequency grid.
    A final joint refinement over all five parameters stops when the
    parameter step falls below ``xtol``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size != y.size or t.size < 8:
        raise ValueError("need at least 8 samples")
    dt_full = float(t[1] - t[0])
    full_t, full_y = t, y
    if t.size > max_points:
        step = int(math.ceil((t.size - 1) / (max_points - 1)))
        t, y = t[::step], y[::step]
    scale = float(np.max(np.abs(full_y - full_y.mean())))
    if scale < 1e-14 * max(1.0, float(np.max(np.abs(full_y)))) or scale == 0.0:
        mode = OscillationMode(a=0.0, A=0.0, omega=0.0, phi=0.0, C=float(full_y.mean()))
        res = full_y - mode.C
        return SinusoidFit(mode, True, float(np.sqrt(np.mean(res**2))), float(np.sum(res**2) * dt_full), 0)
    span = t[-1] - t[0]
    w_peak = _spectral_peak(t, y)
    a_env = _envelope_rate(t, y)
    w_grid = np.geomspace(0.5 * math.pi / span, 0.5 * math.pi / (t[1] - t[0]), 16)
    starts = [(a, w) for a in {a_env, 0.02, 0.2} for w in [w_peak, *w_grid] if w > 0]
    scored = sorted(starts, key=lambda p: float(np.sum(_project(t, y, *p)[1] ** 2)))
    best = None
    nfev = 0
    lo, hi = [-0.5, 1e-4], [100.0, 0.5 * math.pi / (t[1] - t[0]) * 2]
    for a0, w0 in scored[:4]:
        sol = least_squares(
            lambda p: _project(t, y, p[0], p[1])[1] / scale,
            x0=[min(max(a0, lo[0]), hi[0]), min(max(w0, lo[1]), hi[1])],
            bounds=(lo, hi),
            xtol=1e-12,
            ftol=1e-14,
            gtol=1e-14,
            max_nfev=max_nfev,
        )
        nfev += sol.nfev
        if best is None or sol.cost < best.cost:
            best = sol
    a, w = best.x
    beta, _ = _project(t, y, a, w)
    # joint refinement on all samples: y = exp(-a t) (b1 sin wt + b2 cos wt) + c
    def resid(p):
        return (np.exp(-p[0] * full_t) * (p[2] * np.sin(p[1] * full_t) + p[3] * np.cos(p[1] * full_t)) + p[4] - full_y) / scale

    sol = least_squares(resid, x0=[a, w, *beta], xtol=xtol, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev, method="lm")
    nfev += sol.nfev
    a, w, b1, b2, c = sol.x
    converged = bool(sol.status in (2, 3, 4) or sol.status == 1)
    if w < 0:
        w, b1 = -w, -b1
    A = math.hypot(b1, b2)
    phi = math.atan2(b2, b1)
    if phi == -math.pi:
        phi = math.pi
    mode = OscillationMode(a=float(a), A=float(A), omega=float(w), phi=float(phi), C=float(c))
    res = full_y - mode(full_t)
    return SinusoidFit(
        mode=mode,
        converged=converged and sol.status > 0,
        residual_rms=float(np.sqrt(np.mean(res**2))),
        unmodelled_energy=float(np.sum(res**2) * dt_full),
        nfev=nfev,
    )


def coi_residual(trace, system: SystemModel, fault: FaultSpec, region: str) -> tuple[np.ndarray, np.ndarray]:
    """``(t, df_region - df_COI)`` on ``[0, T_g]``."""
    n = int(round(system.T_g / trace.dt)) + 1
    t = trace.t[:n]
    coi = aggregate(system, fault)
    return t, trace.channel(region)[:n] - coi_frequency(coi, np.minimum(t, system.T_g))


# -- sweeps ------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplePoint:
    index: int
    fault_region: str
    features: dict[str, float]
    targets: dict[str, float]
    flags: tuple[str, ...] = ()


@dataclass
class SweepResult:
    spec: SweepSpec
    samples: list[SamplePoint]
    failures: list[tuple[int, str]] = field(default_factory=list)
    crosscheck: dict[str, float] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    def to_csv(self, path: str | Path | None = None) -> str:
        """Sample table: index, fault region, features, targets."""
        fkeys = sorted({k for s in self.samples for k in s.features})
        tkeys = sorted({k for s in self.samples for k in s.targets})
        lines = [",".join(["index", "fault_region", *fkeys, *tkeys])]
        for s in self.samples:
            vals = [repr(float(s.features.get(k, float("nan")))) for k in fkeys]
            vals += [repr(float(s.targets.get(k, float("nan")))) for k in tkeys]
            lines.append(",".join([str(s.index), s.fault_region, *vals]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _interval_max(x: np.ndarray, idx: Sequence[int]) -> list[float]:
    out = []
    prev = 0
    for k in idx:
        out.append(float(np.max(x[prev : k + 1])))
        prev = k
    return out


def sample_targets(
    system: SystemModel,
    fault: FaultSpec,
    time_grid: Sequence[float],
    dt: float = 1e-3,
    t_end: float = 30.0,
    analytic: bool = True,
    simulator=simulate,
) -> tuple[dict[str, float], tuple[str, ...]]:
    """Simulate one operating point and compute every regression target."""
    t_end = max(t_end, system.T_g)
    trace = simulator(system, fault, dt=dt, t_end=t_end)
    metrics = trace_metrics(trace)
    targets: dict[str, float] = {}
    flags: list[str] = []
    idx = [int(round(tk / trace.dt)) for tk in time_grid]
    ids = system.region_ids
    for k, r in enumerate(ids):
        targets[f"nadir.{r}"] = metrics.nadir[r]
        targets[f"rocof.{r}"] = metrics.rocof_max_abs[r]
        t, res = coi_residual(trace, system, fault, r)
        fit = fit_damped_sinusoid(t, res)
        if not fit.converged:
            flags.append(f"fit:{r}")
        m = fit.mode
        # RoCoF of whatever the single mode leaves unexplained (other modes)
        leftover = np.gradient(res - m(t), trace.dt, edge_order=2)
        targets[f"unmodelled_rocof.{r}"] = float(np.max(np.abs(leftover)))
        targets[f"Aw.{r}"] = m.A * m.omega
        if system.n_regions > 2:
            targets[f"Aw.{r}"] += targets[f"unmodelled_rocof.{r}"]
        targets[f"A.{r}"] = m.A
        targets[f"omega.{r}"] = m.omega
        targets[f"a.{r}"] = m.a
        targets[f"fit_rms.{r}"] = fit.residual_rms
        g = trace.int_df[:, k]
        for j, tk_i in enumerate(idx):
            targets[f"int.{r}@{j}"] = float(g[tk_i])
        for j, v in enumerate(_interval_max(g, idx)):
            targets[f"int_hi.{r}@{j}"] = v
        for nb in system.neighbours(r):
            d = g - trace.int_df[:, ids.index(nb)]
            dd = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * trace.dt)])
            for j, tk_i in enumerate(idx):
                targets[f"dint.{r}.{nb}@{j}"] = float(dd[tk_i])
            for j, v in enumerate(_interval_max(dd, idx)):
                targets[f"dint_hi.{r}.{nb}@{j}"] = v
    if analytic and system.n_regions == 2:
        try:
            rls = build_laplace_solution(system, fault)
            for r, rl in rls.items():
                rep = extract_modes(partial_fractions(rl))
                targets[f"Aw_exact.{r}"] = rep.mode.A * rep.mode.omega
        except ValueError as exc:
            flags.append(f"analytic:{exc}")
    return targets, tuple(flags)


def run_sweep(
    spec: SweepSpec, base: SystemModel, workers: int = 1, analytic: bool = True, simulator=simulate
) -> SweepResult:
    """Simulate every sweep point and collect :class:`SamplePoint` records.

    Points whose simulation diverges are excluded and listed in
    ``failures``.  For two-region systems the fitted ``A*omega`` is
    compared against the exact Laplace value; the fraction of samples
    within 2% is reported in ``crosscheck``.
    """
    points = sample_points(spec, base)
    grid = spec.grid(base)

    def work(item):
        i, (system, fault) = item
        try:
            targets, flags = sample_targets(system, fault, grid, spec.dt, spec.t_end, analytic, simulator)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            return i, None, str(exc)
        if not all(math.isfinite(v) for v in targets.values()):
            return i, None, "non-finite target"
        return i, SamplePoint(i, fault.region, system_features(system, fault), targets, flags), None

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(work, enumerate(points)))
    else:
        results = [work(item) for item in enumerate(points)]
    samples = [s for _, s, _ in results if s is not None]
    failures = [(i, err) for i, s, err in results if s is None]
    cross: dict[str, float] = {}
    if base.n_regions == 2 and analytic:
        rel = []
        for s in samples:
            for r in base.region_ids:
                ex_ = s.targets.get(f"Aw_exact.{r}")
                if ex_ is not None and ex_ > 0:
                    rel.append(abs(s.targets[f"Aw.{r}"] - ex_) / ex_)
        if rel:
            rel_a = np.array(rel)
            cross = {
                "n": float(rel_a.size),
                "within_2pct": float(np.mean(rel_a <= 0.02)),
                "median_rel": float(np.median(rel_a)),
                "max_rel": float(rel_a.max()),
            }
    return SweepResult(spec=spec, samples=samples, failures=failures, crosscheck=cross)


# -- regression ----------------------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    target: str
    fault_region: str
    direction: str  # "upper": prediction + offset >= target; "lower": <=
    intercept: float
    coefficients: dict[str, float]
    conservative_offset: float
    diagnostics: dict[str, float] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    def predict(self, features: Mapping[str, float]) -> float:
        return self.intercept + sum(c * features[k] for k, c in self.coefficients.items())

    def bound(self, features: Mapping[str, float]) -> float:
        """Prediction shifted in the conservative direction."""
        return self.predict(features) + self.conservative_offset

    def holds(self, features: Mapping[str, float], target: float, tol: float = 0.0) -> bool:
        b = self.bound(features)
        return b + tol >= target if self.direction == "upper" else b - tol <= target

    def to_dict(self) -> dict[str, Any]:
        return {
            "target": self.target,
            "fault_region": self.fault_region,
            "direction": self.direction,
            "features": sorted(self.coefficients),
            "intercept": self.intercept,
            "coefficients": dict(self.coefficients),
            "conservative_offset": self.conservative_offset,
            "diagnostics": dict(self.diagnostics),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LinearModel":
        return cls(
            target=d["target"],
            fault_region=d["fault_region"],
            direction=d["direction"],
            intercept=float(d["intercept"]),
            coefficients={k: float(v) for k, v in d["coefficients"].items()},
            conservative_offset=float(d["conservative_offset"]),
            diagnostics={k: float(v) for k, v in d.get("diagnostics", {}).items()},
            metadata=dict(d.get("metadata", {})),
        )


def default_features(sample: SamplePoint) -> list[str]:
    return sorted(sample.features)


def fit_linear_model(
    samples: Sequence[SamplePoint],
    target: str,
    direction: str = "upper",
    features: Sequence[str] | None = None,
    offset_mode: str = "loo",
    quantile: float = 0.99,
    min_ratio: float = 10.0,
    metadata: Mapping[str, Any] | None = None,
) -> LinearModel:
    """Ordinary least squares plus a conservative offset.

    ``offset_mode="loo"`` (default) shifts by the worst leave-one-out
    residual, which bounds every training sample and misses a fresh
    sample with probability close to ``1/(n+1)``.  ``"max"`` uses the
    worst in-sample residual (optimistic by the leverage of each point);
    ``"quantile"`` uses the given residual quantile and gives up the
    training guarantee.  Features with no spread in the samples
    are dropped (recorded in ``diagnostics['dropped']``).
    """
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    if not samples:
        raise RegressionError("no samples")
    fault_regions = {s.fault_region for s in samples}
    if len(fault_regions) != 1:
        raise RegressionError("samples must share one fault region")
    names = list(features) if features is not None else default_features(samples[0])
    X = np.array([[s.features[k] for k in names] for s in samples], dtype=float)
    y = np.array([s.targets[target] for s in samples], dtype=float)
    spread = X.max(axis=0) - X.min(axis=0) if len(samples) else np.zeros(len(names))
    keep = spread > 1e-12 * np.maximum(np.abs(X).max(axis=0), 1e-300)
    dropped = [n for n, k in zip(names, keep) if not k]
    names = [n for n, k in zip(names, keep) if k]
    X = X[:, keep]
    if len(samples) < min_ratio * (len(names) + 1):
        raise RegressionError(f"{len(samples)} samples for {len(names)} features; need {min_ratio}x more")
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    Z = np.column_stack([np.ones(len(y)), (X - mu) / sd])
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise RegressionError(f"rank-deficient design matrix for {target}")
    beta, *_ = np.linalg.lstsq(Z, y, rcond=None)
    coef = beta[1:] / sd
    intercept = float(beta[0] - np.dot(coef, mu))
    pred = intercept + X @ coef
    resid = y - pred
    if offset_mode == "max":
        offset = float(resid.max()) if direction == "upper" else float(resid.min())
    elif offset_mode == "loo":
        # leave-one-out residuals e_i / (1 - h_ii) behave like residuals on new samples
        q, _ = np.linalg.qr(Z)
        h = np.minimum(np.einsum("ij,ij->i", q, q), 1.0 - 1e-12)
        loo = resid / (1.0 - h)
        offset = float(loo.max()) if direction == "upper" else float(loo.min())
    elif offset_mode == "quantile":
        offset = float(np.quantile(resid, quantile if direction == "upper" else 1.0 - quantile))
    else:
        raise ValueError(f"unknown offset mode {offset_mode!r}")
    if direction == "upper":
        offset = max(offset, 0.0)
    else:
        offset = min(offset, 0.0)
    nz = np.abs(y) > 1e-12 * max(float(np.max(np.abs(y))), 1e-300)
    rel = resid[nz] / np.abs(y[nz]) if nz.any() else np.zeros(1)
    diag = {
        "n": float(len(y)),
        "max_residual": float(np.max(np.abs(resid))),
        "rms_residual": float(np.sqrt(np.mean(resid**2))),
        "rms_relative": float(np.sqrt(np.mean(rel**2))),
    }
    meta = {"feature_note": FEATURE_SET_NOTE, "offset_mode": offset_mode, "dropped": dropped}
    meta.update(metadata or {})
    model = LinearModel(
        target=target,
        fault_region=next(iter(fault_regions)),
        direction=direction,
        intercept=intercept,
        coefficients={k: float(c) for k, c in zip(names, coef)},
        conservative_offset=offset,
        diagnostics=diag,
        metadata=meta,
    )
    if offset_mode in ("max", "loo"):
        # predict() sums in a different order than X @ coef; step the offset
        # outward by ulps until the bound holds exactly on every sample
        sign = 1.0 if direction == "upper" else -1.0
        for _ in range(64):
            if all(model.holds(s.features, s.targets[target]) for s in samples):
                break
            bumped = np.nextafter(model.conservative_offset, sign * np.inf) + sign * np.spacing(np.max(np.abs(y)))
            model = replace(model, conservative_offset=float(bumped))
    return model


def _by_fault(samples: Iterable[SamplePoint]) -> dict[str, list[SamplePoint]]:
    out: dict[str, list[SamplePoint]] = {}
    for s in samples:
        out.setdefault(s.fault_region, []).append(s)
    return out


def _meta(result: SweepResult | None) -> dict[str, Any]:
    if result is None:
        return {}
    return {"seed": result.spec.seed, "ranges": {k: list(v) for k, v in result.spec.ranges.items()}}


def regress_rocof_term(samples: Sequence[SamplePoint] | SweepResult, **kw) -> dict[tuple[str, str], LinearModel]:
    """Upper-bounding models of ``A*omega`` keyed by ``(region, fault_region)``."""
    meta = _meta(samples if isinstance(samples, SweepResult) else None)
    samples = list(samples)
    out = {}
    for fr, group in _by_fault(samples).items():
        regions = sorted({k.split(".", 1)[1] for k in group[0].targets if k.startswith("Aw.")})
        for r in regions:
            out[(r, fr)] = fit_linear_model(group, f"Aw.{r}", "upper", metadata=meta, **kw)
    return out


def regress_energy_integrals(
    samples: Sequence[SamplePoint] | SweepResult, time_grid: Sequence[float] | None = None, **kw
) -> dict[tuple[str, str], LinearModel]:
    """Upper-bounding models for every integral target, keyed ``(target, fault_region)``.

    Signed ``int`` targets are non-positive, so an upper bound under-credits
    the damping benefit; ``dint`` targets are energy sent away, so an upper
    bound over-estimates the loss.  Both directions are conservative.
    """
    meta = _meta(samples if isinstance(samples, SweepResult) else None)
    if time_grid is not None:
        meta["time_grid"] = list(time_grid)
    samples = list(samples)
    out = {}
    for fr, group in _by_fault(samples).items():
        keys = sorted(k for k in group[0].targets if k.split(".", 1)[0] in ("int", "int_hi", "dint", "dint_hi"))
        for key in keys:
            out[(key, fr)] = fit_linear_model(group, key, "upper", metadata=meta, **kw)
    return out


# -- model files ----------------------------------------------------------------------


@dataclass
class ModelBundle:
    rocof: dict[tuple[str, str], LinearModel]
    integrals: dict[tuple[str, str], LinearModel]
    time_grid: tuple[float, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def rocof_model(self, region: str, fault_region: str) -> LinearModel | None:
        return self.rocof.get((region, fault_region))

    def integral_model(self, key: str, fault_region: str) -> LinearModel | None:
        return self.integrals.get((key, fault_region))

    def to_json(self) -> str:
        doc = {
            "format": "regfreq-models/1",
            "version": __version__,
            "metadata": {"feature_note": FEATURE_SET_NOTE, **self.metadata},
            "time_grid": list(self.time_grid),
            "rocof": [m.to_dict() for m in self.rocof.values()],
            "integrals": [m.to_dict() for m in self.integrals.values()],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "ModelBundle":
        doc = json.loads(text)
        if doc.get("format") != "regfreq-models/1":
            raise ValueError("not a regfreq model file")
        rocof = {}
        for d in doc["rocof"]:
            m = LinearModel.from_dict(d)
            rocof[(m.target.split(".", 1)[1], m.fault_region)] = m
        integ = {}
        for d in doc["integrals"]:
            m = LinearModel.from_dict(d)
            integ[(m.target, m.fault_region)] = m
        return cls(rocof=rocof, integrals=integ, time_grid=tuple(doc["time_grid"]), metadata=doc.get("metadata", {}))

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        return cls.from_json(Path(path).read_text())


def fit_models(result: SweepResult, base: SystemModel, **kw) -> ModelBundle:
    grid = result.spec.grid(base)
    meta = {"seed": result.spec.seed, "sweep": result.spec.to_dict(), "samples": len(result.samples)}
    return ModelBundle(
        rocof=regress_rocof_term(result, **kw),
        integrals=regress_energy_integrals(result, grid, **kw),
        time_grid=tuple(grid),
        metadata=meta,
    )


def conservative_rate(models: Mapping[Any, LinearModel], samples: Sequence[SamplePoint], tol: float = 0.0) -> dict[str, float]:
    """Fraction of samples on which each model's bound holds."""
    by_fault = _by_fault(samples)
    out = {}
    for key, m in models.items():
        group = by_fault.get(m.fault_region, [])
        if not group:
            continue
        ok = [m.holds(s.features, s.targets[m.target], tol) for s in group]
        out[f"{m.target}|{m.fault_region}"] = float(np.mean(ok))
    return out
