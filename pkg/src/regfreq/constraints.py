"""Linear frequency-security constraints and their validation.

Decision symbols: ``H_<r>``, ``R_<r>``, ``EFR_<r>``, ``PL_<r>`` (lost
infeed in the faulted region) and optionally ``Dp_<r>``.  Everything else
is evaluated at the scheduling point and folded into the right-hand side.

Nadir constraints come in two forms:

``mode="point"``
    one energy balance per region at each grid time ``t_k``, with the
    response credits evaluated at ``t_k`` and the EFR credit
    ``EFR (t_k - t_delay)^2 / 2`` per second of ramp.
``mode="interval"`` (default)
    balances over each interval ``[t_{k-1}, t_k]``: losses at ``t_k``,
    credits at ``t_{k-1}``, the integral terms bounded by their interval
    extremes and EFR credited with the energy it has actually delivered.
    Block ``k`` enforces every interval up to ``t_k``.  A point meeting
    such a block keeps every region above ``-df_max`` until ``t_k``.

The guard chain is ``R t_k / T_g > P_L - sum(D') df_max``; the first true
guard selects the active block and the last block is the fallback.

Coefficients on ``H``, ``R``, ``EFR`` (and ``Dp``) that would make a
constraint harder to meet as the quantity grows are frozen at the
scheduling point (listed in ``metadata['frozen']``), so that adding
inertia or response never breaks a satisfied constraint.
"""
from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .dynamics import settling_horizon, simulate, trace_metrics
from .fitting import LinearModel, ModelBundle, SweepSpec, sample_points, system_features
from .model import FaultSpec, Limits, SystemModel

SENSES = ("<=", ">=", ">")
DEFAULT_SYMBOLIC = ("H", "R", "EFR", "PL")
IMPROVING = ("H", "R", "EFR", "Dp")


class ExtrapolationWarning(UserWarning):
    pass


class MissingSymbolError(KeyError):
    pass


@dataclass(frozen=True)
class LinearInequality:
    name: str
    coefficients: dict[str, float]
    rhs: float
    sense: str = "<="
    units: str = ""

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"{self.name}: unknown sense {self.sense!r}")
        if not any(v != 0.0 for v in self.coefficients.values()):
            raise ValueError(f"{self.name}: no nonzero coefficient")

    def lhs(self, point: Mapping[str, float]) -> float:
        total = 0.0
        for s, c in self.coefficients.items():
            if s not in point:
                raise MissingSymbolError(s)
            total += c * point[s]
        return total

    def slack(self, point: Mapping[str, float]) -> float:
        """Distance to the boundary in constraint units; >= 0 when met."""
        v = self.lhs(point)
        return self.rhs - v if self.sense == "<=" else v - self.rhs

    def satisfied(self, point: Mapping[str, float]) -> bool:
        s = self.slack(point)
        return s > 0.0 if self.sense == ">" else s >= 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "coefficients": dict(self.coefficients), "rhs": self.rhs, "sense": self.sense, "units": self.units}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LinearInequality":
        return cls(d["name"], {k: float(v) for k, v in d["coefficients"].items()}, float(d["rhs"]), d["sense"], d.get("units", ""))


@dataclass(frozen=True)
class ConditionalBlock:
    t_k: float
    guard: LinearInequality
    body: tuple[LinearInequality, ...]
    fallback: bool = False  # enforced when no earlier guard holds

    def to_dict(self) -> dict[str, Any]:
        return {"t_k": self.t_k, "fallback": self.fallback, "guard": self.guard.to_dict(), "body": [b.to_dict() for b in self.body]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ConditionalBlock":
        return cls(
            float(d["t_k"]),
            LinearInequality.from_dict(d["guard"]),
            tuple(LinearInequality.from_dict(b) for b in d["body"]),
            bool(d.get("fallback", False)),
        )


@dataclass(frozen=True)
class ConstraintSet:
    rocof: dict[str, LinearInequality]
    nadir: tuple[ConditionalBlock, ...]
    qss: LinearInequality
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def point(self) -> dict[str, float]:
        """Decision values at the scheduling point."""
        return dict(self.metadata.get("point", {}))

    def inequalities(self) -> Iterable[LinearInequality]:
        yield from self.rocof.values()
        yield self.qss
        for b in self.nadir:
            yield b.guard
            yield from b.body

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": "regfreq-constraints/1",
            "rocof": {r: c.to_dict() for r, c in self.rocof.items()},
            "nadir": [b.to_dict() for b in self.nadir],
            "qss": self.qss.to_dict(),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ConstraintSet":
        if d.get("format") != "regfreq-constraints/1":
            raise ValueError("not a regfreq constraint document")
        return cls(
            rocof={r: LinearInequality.from_dict(c) for r, c in d["rocof"].items()},
            nadir=tuple(ConditionalBlock.from_dict(b) for b in d["nadir"]),
            qss=LinearInequality.from_dict(d["qss"]),
            metadata=dict(d.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "ConstraintSet":
        return cls.from_dict(json.loads(text))


# -- symbolic expansion ---------------------------------------------------------------


def _feature_symbol(feature: str, fault: FaultSpec, symbolic: Sequence[str]) -> str | None:
    kind, _, target = feature.partition(".")
    if kind in ("H", "R", "EFR") and kind in symbolic:
        return f"{kind}_{target}"
    if kind == "Dp" and "Dp" in symbolic:
        return f"Dp_{target}"
    if feature == "P_L" and "PL" in symbolic:
        return f"PL_{fault.region}"
    return None


class _Expr:
    """Affine form ``sum c_s s + const`` with a record of symbol values."""

    def __init__(self):
        self.coef: dict[str, float] = {}
        self.const = 0.0

    def add(self, symbol: str | None, c: float, value: float) -> None:
        if symbol is None:
            self.const += c * value
        else:
            self.coef[symbol] = self.coef.get(symbol, 0.0) + c

    def add_model(self, m: LinearModel, x: Mapping[str, float], fault, symbolic, scale: float = 1.0) -> None:
        self.const += scale * (m.intercept + m.conservative_offset)
        for k, c in m.coefficients.items():
            self.add(_feature_symbol(k, fault, symbolic), scale * c, x[k])


def _finish(
    name: str,
    e: _Expr,
    sense: str,
    point: Mapping[str, float],
    frozen: set[str],
    freeze_wrong_sign: bool,
    record: list,
    units: str,
) -> LinearInequality:
    """``e <sense> 0`` with wrong-sign or requested symbols folded into the rhs."""
    coef = {}
    rhs = -e.const
    for s, c in sorted(e.coef.items()):
        kind = s.split("_", 1)[0]
        wrong = kind in IMPROVING and ((sense == "<=" and c > 0) or (sense in (">=", ">") and c < 0))
        if s in frozen or (freeze_wrong_sign and wrong and sense != ">"):
            rhs -= c * point[s]
            if s not in frozen:
                record.append(f"{name}:{s}")
        elif c != 0.0:
            coef[s] = c
    return LinearInequality(name, coef, rhs, sense, units)


def decision_point(system: SystemModel, fault: FaultSpec) -> dict[str, float]:
    point = {}
    for r in system.regions:
        point[f"H_{r.id}"] = r.H
        point[f"R_{r.id}"] = r.R
        point[f"EFR_{r.id}"] = r.EFR
        point[f"Dp_{r.id}"] = r.D_prime
        point[f"PL_{r.id}"] = 0.0
    point[f"PL_{fault.region}"] = fault.P_L
    return point


def check_coverage(models: Iterable[LinearModel], features: Mapping[str, float]) -> list[str]:
    """Features outside the training ranges recorded in the model metadata."""
    out = set()
    for m in models:
        for key, (lo, hi) in m.metadata.get("ranges", {}).items():
            v = features.get(key)
            if v is not None and not (lo - 1e-9 * abs(lo) <= v <= hi + 1e-9 * abs(hi)):
                out.add(key)
    return sorted(out)


def efr_energy_point(efr: float, delay: float, t: float) -> float:
    """``EFR (t - delay)^2 / 2`` per second of ramp, zero before the delay."""
    return efr * max(t - delay, 0.0) ** 2 / 2.0


def efr_energy_delivered(delay: float, t: float) -> float:
    """Energy (MW s per MW of EFR) delivered by a 1 s ramp started at ``delay``."""
    tau = t - delay
    if tau <= 0.0:
        return 0.0
    return tau * tau / 2.0 if tau < 1.0 else tau - 0.5


# -- generators ---------------------------------------------------------------------------


def _ctx(system, fault, symbolic, frozen):
    x = system_features(system, fault)
    point = decision_point(system, fault)
    return x, point, tuple(symbolic), set(frozen)


def rocof_constraints(
    system: SystemModel,
    fault: FaultSpec,
    rocof_models: ModelBundle | Mapping[str, LinearModel],
    limits: Limits,
    symbolic: Sequence[str] = DEFAULT_SYMBOLIC,
    frozen: Iterable[str] = (),
    freeze_wrong_sign: bool = True,
    _record: list | None = None,
) -> dict[str, LinearInequality]:
    """``P_L / (2 sum H) + bound(A omega)_i <= RoCoF_max`` for each region.

    Multiplied through by ``2 sum H`` (frozen in the product with the
    oscillation term) so it is linear in the decision symbols::

        PL - 2 RoCoF_max sum_j H_j + 2 H_sched bound_i(x) <= 0
    """
    x, point, symbolic, frozen = _ctx(system, fault, symbolic, frozen)
    record = [] if _record is None else _record
    h_sched = sum(r.H for r in system.regions)
    out = {}
    for r in system.region_ids:
        m = rocof_models.rocof_model(r, fault.region) if isinstance(rocof_models, ModelBundle) else rocof_models.get(r)
        if m is None:
            raise KeyError(f"no A*omega model for region {r} with fault in {fault.region}")
        e = _Expr()
        e.add("PL_" + fault.region if "PL" in symbolic else None, 1.0, fault.P_L)
        for rg in system.regions:
            e.add(f"H_{rg.id}" if "H" in symbolic else None, -2.0 * limits.rocof_max, rg.H)
        e.add_model(m, x, fault, symbolic, scale=2.0 * h_sched)
        out[r] = _finish(f"rocof_{r}", e, "<=", point, frozen, freeze_wrong_sign, record, "MW")
    return out


def _model(models: ModelBundle | Mapping[str, LinearModel], key: str, fault: FaultSpec) -> LinearModel:
    m = models.integral_model(key, fault.region) if isinstance(models, ModelBundle) else models.get(key)
    if m is None:
        raise KeyError(f"no model for {key} with fault in {fault.region}")
    return m


def guard_inequality(system, fault, limits, t_k, k, symbolic=DEFAULT_SYMBOLIC, frozen=()) -> LinearInequality:
    """``sum_i R_i t_k / T_g - PL > - sum_i D'_i df_max``."""
    x, point, symbolic, frozen = _ctx(system, fault, symbolic, frozen)
    e = _Expr()
    for rg in system.regions:
        e.add(f"R_{rg.id}" if "R" in symbolic else None, t_k / system.T_g, rg.R)
        e.add(f"Dp_{rg.id}" if "Dp" in symbolic else None, limits.df_max, rg.D_prime)
    e.add(f"PL_{fault.region}" if "PL" in symbolic else None, -1.0, fault.P_L)
    return _finish(f"nadir_b{k + 1}_guard", e, ">", point, frozen, False, [], "MW")


def nadir_constraints(
    system: SystemModel,
    fault: FaultSpec,
    integral_models: ModelBundle | Mapping[str, LinearModel],
    limits: Limits,
    time_grid: Sequence[float],
    mode: str = "interval",
    symbolic: Sequence[str] = DEFAULT_SYMBOLIC,
    frozen: Iterable[str] = (),
    freeze_wrong_sign: bool = True,
    _record: list | None = None,
) -> list[ConditionalBlock]:
    """Guarded per-region energy balances, one block per grid time."""
    if mode not in ("interval", "point"):
        raise ValueError(f"unknown nadir mode {mode!r}")
    grid = [float(t) for t in time_grid]
    if not grid or grid != sorted(grid) or grid[0] <= 0 or grid[-1] > system.T_g * (1 + 1e-12):
        raise ValueError("time grid must be ascending within (0, T_g]")
    x, point, symbolic_t, frozen_s = _ctx(system, fault, symbolic, frozen)
    record = [] if _record is None else _record
    dfm = limits.df_max
    tg = system.T_g
    prefix = "" if mode == "point" else "_hi"

    def body(region, j: int) -> LinearInequality:
        rg = system.region(region)
        t_loss = grid[j]
        t_credit = grid[j] if mode == "point" else (grid[j - 1] if j > 0 else 0.0)
        e = _Expr()
        if region == fault.region:
            e.add(f"PL_{region}" if "PL" in symbolic_t else None, t_loss, fault.P_L)
        for nb in system.neighbours(region):
            m = _model(integral_models, f"dint{prefix}.{region}.{nb}@{j}", fault)
            e.add_model(m, x, fault, symbolic_t, scale=system.line_stiffness(region, nb))
        m = _model(integral_models, f"int{prefix}.{region}@{j}", fault)
        if "Dp" in symbolic_t:
            # D' * bound(int): linearised about the scheduling point
            e.add(f"Dp_{region}", m.bound(x), rg.D_prime)
        else:
            e.add_model(m, x, fault, symbolic_t, scale=rg.D_prime)
        e.add(f"H_{region}" if "H" in symbolic_t else None, -2.0 * dfm, rg.H)
        e.add(f"R_{region}" if "R" in symbolic_t else None, -t_credit**2 / (2.0 * tg), rg.R)
        if mode == "point":
            w = max(t_credit - rg.EFR_delay, 0.0) ** 2 / 2.0
        else:
            w = efr_energy_delivered(rg.EFR_delay, t_credit)
        if rg.EFR or "EFR" in symbolic_t:
            e.add(f"EFR_{region}" if "EFR" in symbolic_t else None, -w, rg.EFR)
        return _finish(f"nadir_b{k + 1}_{region}_t{j + 1}", e, "<=", point, frozen_s, freeze_wrong_sign, record, "MW s")

    blocks = []
    for k, t_k in enumerate(grid):
        guard = guard_inequality(system, fault, limits, t_k, k, symbolic_t, frozen_s)
        js = [k] if mode == "point" else range(k + 1)
        items = tuple(body(r, j) for j in js for r in system.region_ids)
        blocks.append(ConditionalBlock(t_k, guard, items, fallback=(k == len(grid) - 1)))
    return blocks


def qss_constraint(
    system: SystemModel,
    fault: FaultSpec,
    limits: Limits,
    symbolic: Sequence[str] = DEFAULT_SYMBOLIC,
    frozen: Iterable[str] = (),
) -> LinearInequality:
    """``sum_i R_i >= P_L - df_ss_max sum_i D'_i``."""
    x, point, symbolic, frozen = _ctx(system, fault, symbolic, frozen)
    e = _Expr()
    for rg in system.regions:
        e.add(f"R_{rg.id}" if "R" in symbolic else None, 1.0, rg.R)
        e.add(f"Dp_{rg.id}" if "Dp" in symbolic else None, limits.df_ss_max, rg.D_prime)
    e.add(f"PL_{fault.region}" if "PL" in symbolic else None, -1.0, fault.P_L)
    return _finish("qss", e, ">=", point, frozen, False, [], "MW")


def generate_constraints(
    system: SystemModel,
    fault: FaultSpec,
    limits: Limits,
    models: ModelBundle,
    time_grid: Sequence[float] | None = None,
    mode: str = "interval",
    symbolic: Sequence[str] = DEFAULT_SYMBOLIC,
    frozen: Iterable[str] = (),
    freeze_wrong_sign: bool = True,
    warn: bool = True,
) -> ConstraintSet:
    """Full constraint set for one scheduling point."""
    limits.validate()
    grid = tuple(time_grid) if time_grid is not None else tuple(models.time_grid)
    frozen = tuple(frozen)
    used = [m for m in list(models.rocof.values()) + list(models.integrals.values()) if m.fault_region == fault.region]
    outside = check_coverage(used, system_features(system, fault))
    if outside and warn:
        warnings.warn(f"scheduling point outside training ranges: {', '.join(outside)}", ExtrapolationWarning, stacklevel=2)
    record: list[str] = []
    roc = rocof_constraints(system, fault, models, limits, symbolic, frozen, freeze_wrong_sign, record)
    nad = nadir_constraints(system, fault, models, limits, grid, mode, symbolic, frozen, freeze_wrong_sign, record)
    qss = qss_constraint(system, fault, limits, symbolic, frozen)
    meta = {
        "limits": {"rocof_max": limits.rocof_max, "df_max": limits.df_max, "df_ss_max": limits.df_ss_max},
        "time_grid": list(grid),
        "mode": mode,
        "fault_region": fault.region,
        "symbolic": list(symbolic),
        "frozen": sorted(set(frozen)) + sorted(record),
        "extrapolated": outside,
        "point": decision_point(system, fault),
        "models": {"seed": models.metadata.get("seed"), "samples": models.metadata.get("samples")},
    }
    return ConstraintSet(rocof=roc, nadir=tuple(nad), qss=qss, metadata=meta)


# -- evaluation ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Evaluation:
    satisfied: dict[str, bool]
    slacks: dict[str, float]
    active_block: int  # index into ConstraintSet.nadir
    feasible: bool

    @property
    def failed(self) -> list[str]:
        return [k for k, v in self.satisfied.items() if not v]


def active_block(cset: ConstraintSet, point: Mapping[str, float]) -> int:
    for k, b in enumerate(cset.nadir):
        if b.fallback or b.guard.satisfied(point):
            return k
    return len(cset.nadir) - 1


def evaluate(cset: ConstraintSet, point: Mapping[str, float] | None = None) -> Evaluation:
    """Substitute decision values; the first true guard picks the nadir block."""
    point = cset.point if point is None else point
    sat, slack = {}, {}
    for c in list(cset.rocof.values()) + [cset.qss]:
        slack[c.name] = c.slack(point)
        sat[c.name] = c.satisfied(point)
    k = active_block(cset, point) if cset.nadir else -1
    if k >= 0:
        for c in cset.nadir[k].body:
            slack[c.name] = c.slack(point)
            sat[c.name] = c.satisfied(point)
    return Evaluation(sat, slack, k, all(sat.values()))


# -- LP text export --------------------------------------------------------------------------


def _lp_row(c: LinearInequality) -> str:
    terms = " ".join(f"{'+' if v >= 0 else '-'} {abs(v)!r} {s}" for s, v in sorted(c.coefficients.items()))
    return f"{c.name}: {terms} {c.sense} {c.rhs!r}"


def to_lp(cset: ConstraintSet) -> str:
    """Flat LP-style listing; conditional blocks carry guard annotations."""
    meta = cset.metadata
    lines = [
        "\\ regfreq frequency-security constraints",
        f"\\ mode {meta.get('mode', '')}; fault region {meta.get('fault_region', '')}",
        "\\ nadir blocks form an if-else chain: the first block whose guard holds is enforced;",
        "\\ the block marked fallback is enforced when no guard holds",
        "Subject To",
    ]
    for c in cset.rocof.values():
        lines.append(" " + _lp_row(c))
    lines.append(" " + _lp_row(cset.qss))
    for k, b in enumerate(cset.nadir):
        tag = " fallback" if b.fallback else ""
        lines.append(f"\\ block {k + 1} t_k {b.t_k!r}{tag}")
        lines.append("\\ guard " + _lp_row(b.guard))
        for c in b.body:
            lines.append(" " + _lp_row(c))
    lines.append("End")
    return "\n".join(lines) + "\n"


_ROW = re.compile(r"^(?P<name>[\w.@-]+):(?P<terms>.*?)\s(?P<sense><=|>=|>)\s(?P<rhs>\S+)$")
_TERM = re.compile(r"([+-])\s+(\S+)\s+([A-Za-z_][\w]*)")


def _parse_row(text: str) -> LinearInequality:
    m = _ROW.match(text.strip())
    if not m:
        raise ValueError(f"cannot parse LP row: {text!r}")
    coef = {}
    for sign, val, sym in _TERM.findall(m.group("terms")):
        coef[sym] = coef.get(sym, 0.0) + (float(val) if sign == "+" else -float(val))
    return LinearInequality(m.group("name"), coef, float(m.group("rhs")), m.group("sense"))


def parse_lp(text: str) -> tuple[list[LinearInequality], list[tuple[float, bool, LinearInequality, list[LinearInequality]]]]:
    """Read :func:`to_lp` output: unconditional rows and ``(t_k, fallback, guard, body)`` blocks."""
    plain: list[LinearInequality] = []
    blocks: list = []
    in_body = False
    for raw in text.splitlines():
        line = raw.strip()
        if line == "Subject To":
            in_body = True
            continue
        if line == "End" or not line:
            continue
        if line.startswith("\\ block "):
            parts = line.split()
            blocks.append([float(parts[4]), parts[-1] == "fallback", None, []])
        elif line.startswith("\\ guard "):
            blocks[-1][2] = _parse_row(line[len("\\ guard "):])
        elif line.startswith("\\"):
            continue
        elif in_body:
            row = _parse_row(line)
            (blocks[-1][3] if blocks else plain).append(row)
    return plain, [tuple(b) for b in blocks]


def save(cset: ConstraintSet, stem: str | Path) -> tuple[Path, Path]:
    """Write ``<stem>.json`` and ``<stem>.lp``."""
    stem = Path(stem)
    js, lp = stem.with_suffix(".json"), stem.with_suffix(".lp")
    js.write_text(cset.to_json())
    lp.write_text(to_lp(cset))
    return js, lp


# -- validation ---------------------------------------------------------------------------


@dataclass
class PointOutcome:
    index: int
    fault_region: str
    feasible: bool
    secure: bool
    nadir: float  # worst regional nadir, Hz (negative)
    rocof: float  # worst regional max |RoCoF|, Hz/s
    qss: float  # Hz
    rocof_underbound: float  # max_i sim |RoCoF_i| - (P_L/2H + bound_i), Hz/s
    active_block: int


@dataclass
class ConservativenessReport:
    limits: Limits
    outcomes: list[PointOutcome]
    tolerance: dict[str, float]

    @property
    def n(self) -> int:
        return len(self.outcomes)

    @property
    def violations(self) -> list[PointOutcome]:
        return [o for o in self.outcomes if o.feasible and not self.within(o)]

    def within(self, o: PointOutcome) -> bool:
        tol = self.tolerance
        return (
            -o.nadir <= self.limits.df_max + tol["nadir"]
            and o.rocof <= self.limits.rocof_max + tol["rocof"]
            and abs(o.qss) <= self.limits.df_ss_max + tol["qss"]
        )

    @property
    def violation_rate(self) -> float:
        feas = sum(o.feasible for o in self.outcomes)
        return len(self.violations) / feas if feas else 0.0

    @property
    def over_conservativeness(self) -> float:
        secure = [o for o in self.outcomes if o.secure]
        return sum(not o.feasible for o in secure) / len(secure) if secure else 0.0

    def margins(self, bins: int = 20) -> dict[str, dict[str, list[float]]]:
        """Histograms of the limit margins (positive = inside the limit)."""
        out = {}
        if not self.outcomes:
            return out
        data = {
            "nadir": [self.limits.df_max + o.nadir for o in self.outcomes],
            "rocof": [self.limits.rocof_max - o.rocof for o in self.outcomes],
            "qss": [self.limits.df_ss_max - abs(o.qss) for o in self.outcomes],
        }
        for k, v in data.items():
            counts, edges = np.histogram(v, bins=bins)
            out[k] = {"counts": counts.tolist(), "edges": edges.tolist()}
        return out

    def summary(self) -> dict[str, Any]:
        return {
            "points": self.n,
            "feasible": sum(o.feasible for o in self.outcomes),
            "secure": sum(o.secure for o in self.outcomes),
            "violations": len(self.violations),
            "violation_rate": self.violation_rate,
            "over_conservativeness": self.over_conservativeness,
            "rocof_bound_underbounds": sum(o.rocof_underbound > self.tolerance["rocof"] for o in self.outcomes),
            "max_rocof_underbound": max((o.rocof_underbound for o in self.outcomes), default=0.0),
        }


def simulate_security(system: SystemModel, fault: FaultSpec, dt: float = 0.005, decades: float = 4.0, simulator=simulate):
    """Worst nadir, worst RoCoF and q-s-s of one operating point.

    The horizon runs until the slowest mode has decayed ``decades``.
    """
    horizon = max(settling_horizon(system, decades), 30.0)
    t_end = math.ceil(horizon / dt) * dt
    trace = simulator(system, fault, dt=dt, t_end=t_end)
    m = trace_metrics(trace)
    return m, trace


def validate_constraints(
    generator: Callable[[SystemModel, FaultSpec], ConstraintSet] | ModelBundle,
    sweep: SweepSpec,
    base: SystemModel,
    limits: Limits,
    simulator=simulate,
    mode: str = "interval",
    dt: float = 0.005,
    tolerance: Mapping[str, float] | None = None,
    workers: int = 1,
) -> ConservativenessReport:
    """Generate constraints at every sweep point, classify, and simulate.

    All points are simulated so that over-conservativeness (secure points
    the constraints reject) can be reported next to the violation count.
    """
    tol = {"nadir": 1e-3, "rocof": 1e-3, "qss": 1e-3}
    tol.update(tolerance or {})
    if sweep.count == 0:
        return ConservativenessReport(limits, [], tol)
    if isinstance(generator, ModelBundle):
        bundle = generator

        def generator(system, fault):
            return generate_constraints(system, fault, limits, bundle, mode=mode, warn=False)

    points = sample_points(sweep, base)

    def work(item):
        i, (system, fault) = item
        cset = generator(system, fault)
        ev = evaluate(cset)
        m, _ = simulate_security(system, fault, dt=dt, simulator=simulator)
        h = sum(r.H for r in system.regions)
        # A*omega bound check: sim RoCoF vs P_L/2H + bound, from the rocof rows at the point
        under = -math.inf
        for r, c in cset.rocof.items():
            bound = limits.rocof_max - c.slack(cset.point) / (2.0 * h)
            under = max(under, m.rocof_max_abs[r] - bound)
        secure = (
            -m.worst_nadir <= limits.df_max + tol["nadir"]
            and m.worst_rocof <= limits.rocof_max + tol["rocof"]
            and abs(m.qss) <= limits.df_ss_max + tol["qss"]
        )
        return PointOutcome(i, fault.region, ev.feasible, secure, m.worst_nadir, m.worst_rocof, m.qss, under, ev.active_block)

    items = list(enumerate(points))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            outcomes = list(ex.map(work, items))
    else:
        outcomes = [work(it) for it in items]
    return ConservativenessReport(limits, outcomes, tol)
