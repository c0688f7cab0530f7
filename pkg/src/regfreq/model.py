"""System description: regions, lines, faults and limits.

Config documents are TOML with the sections ``[system]``, ``[[region]]``,
``[[line]]``, ``[limits]`` and ``[fault]``.  See ``docs/formats.md``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import tomli
import tomli_w

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class RegionParams:
    id: str
    H: float  # MW s
    D: float  # fraction of demand per Hz
    P_D: float  # MW
    R: float = 0.0  # MW, PFR
    EFR: float = 0.0  # MW
    EFR_delay: float = 0.0  # s
    P_L: float = 0.0  # MW, largest local infeed

    @property
    def D_prime(self) -> float:
        """Load damping in MW/Hz."""
        return self.D * self.P_D

    def validate(self, path: str = "region") -> None:
        if not self.id:
            raise ConfigError(f"{path}.id", "empty region label")
        checks = (
            ("h", self.H, self.H > 0, "non-positive inertia"),
            ("p_d", self.P_D, self.P_D > 0, "non-positive demand"),
            ("d", self.D, self.D >= 0, "negative damping"),
            ("r", self.R, self.R >= 0, "negative response"),
            ("efr", self.EFR, self.EFR >= 0, "negative EFR"),
            ("efr_delay", self.EFR_delay, self.EFR_delay >= 0, "negative EFR delay"),
            ("p_l", self.P_L, self.P_L >= 0, "negative largest infeed"),
        )
        for key, value, ok, msg in checks:
            if not math.isfinite(value):
                raise ConfigError(f"{path}.{key}", "non-finite value")
            if not ok:
                raise ConfigError(f"{path}.{key}", f"{msg} ({value})")


@dataclass(frozen=True)
class Line:
    from_region: str
    to_region: str
    V_from: float = 400.0  # kV
    V_to: float = 400.0  # kV
    X: float = 100.0  # ohm
    delta_ss_from: float | None = None  # rad
    delta_ss_to: float | None = None  # rad
    T: float | None = None  # MW, stiffness

    @property
    def angle_difference(self) -> float:
        if self.delta_ss_from is None or self.delta_ss_to is None:
            raise ValueError(f"line {self.from_region}-{self.to_region}: angles not set")
        return self.delta_ss_from - self.delta_ss_to


@dataclass(frozen=True)
class SystemModel:
    regions: tuple[RegionParams, ...]
    lines: tuple[Line, ...] = ()
    T_g: float = 10.0
    base_frequency: float = 50.0

    @property
    def region_ids(self) -> list[str]:
        return [r.id for r in self.regions]

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def index(self, region_id: str) -> int:
        for i, r in enumerate(self.regions):
            if r.id == region_id:
                return i
        raise KeyError(region_id)

    def region(self, region_id: str) -> RegionParams:
        return self.regions[self.index(region_id)]

    def stiffness_matrix(self) -> np.ndarray:
        """Weighted Laplacian ``L`` such that ``dp_import = -L @ int_df``."""
        n = self.n_regions
        lap = np.zeros((n, n))
        for ln in self.lines:
            i, j = self.index(ln.from_region), self.index(ln.to_region)
            t = compute_stiffness(ln) if ln.T is None else ln.T
            lap[i, i] += t
            lap[j, j] += t
            lap[i, j] -= t
            lap[j, i] -= t
        return lap

    def line_stiffness(self, a: str, b: str) -> float:
        """Total stiffness between two regions (parallel lines add)."""
        total = 0.0
        for ln in self.lines:
            if {ln.from_region, ln.to_region} == {a, b}:
                total += compute_stiffness(ln) if ln.T is None else ln.T
        return total

    def neighbours(self, region_id: str) -> list[str]:
        out = []
        for ln in self.lines:
            if ln.from_region == region_id and ln.to_region not in out:
                out.append(ln.to_region)
            elif ln.to_region == region_id and ln.from_region not in out:
                out.append(ln.from_region)
        return out

    def with_region(self, region_id: str, **changes: float) -> "SystemModel":
        regions = tuple(replace(r, **changes) if r.id == region_id else r for r in self.regions)
        return replace(self, regions=regions)

    def with_stiffness(self, scale: float = 1.0, value: float | None = None) -> "SystemModel":
        """Copy with every line stiffness scaled (or set to ``value``)."""
        lines = []
        for ln in self.lines:
            if value is not None:
                lines.append(replace(ln, T=value))
            else:
                t = compute_stiffness(ln) if ln.T is None else ln.T
                lines.append(replace(ln, T=t * scale))
        return replace(self, lines=tuple(lines))


@dataclass(frozen=True)
class FaultSpec:
    region: str
    P_L: float  # MW

    def validate(self, system: SystemModel, allow_zero: bool = True) -> None:
        if self.region not in system.region_ids:
            raise ConfigError("fault.region", f"unknown region {self.region!r}")
        if not math.isfinite(self.P_L) or self.P_L < 0 or (self.P_L == 0 and not allow_zero):
            raise ConfigError("fault.p_l", f"non-positive lost infeed ({self.P_L})")


@dataclass(frozen=True)
class Limits:
    rocof_max: float  # Hz/s
    df_max: float  # Hz, nadir magnitude
    df_ss_max: float  # Hz

    def validate(self) -> None:
        for key in ("rocof_max", "df_max", "df_ss_max"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"limits.{key}", f"must be strictly positive ({v})")
        if self.df_ss_max > self.df_max:
            raise ConfigError("limits.df_ss_max", "exceeds df_max")


@dataclass(frozen=True)
class Config:
    system: SystemModel
    fault: FaultSpec | None = None
    limits: Limits | None = None
    injections: dict[str, float] = field(default_factory=dict)


def compute_stiffness(line: Line) -> float:
    """Synchronising stiffness ``2*pi*V_i*V_j/X*cos(d_i - d_j)`` in MW.

    Symmetric in the endpoint order.  Raises ``ValueError`` when the angles
    are missing or the linearisation is invalid (``T <= 0``).
    """
    if line.delta_ss_from is None or line.delta_ss_to is None:
        raise ValueError(f"line {line.from_region}-{line.to_region}: steady-state angles missing")
    if not line.X > 0:
        raise ValueError(f"line {line.from_region}-{line.to_region}: non-positive reactance")
    t = TWO_PI * line.V_from * line.V_to / line.X * math.cos(line.delta_ss_from - line.delta_ss_to)
    if not t > 1e-9 * TWO_PI * line.V_from * line.V_to / line.X:
        raise ValueError(
            f"line {line.from_region}-{line.to_region}: angle difference "
            f"{line.delta_ss_from - line.delta_ss_to:.6g} rad outside linearisation range (T={t:.3g})"
        )
    return t


def _network_matrix(system: SystemModel) -> np.ndarray:
    n = system.n_regions
    b = np.zeros((n, n))
    for ln in system.lines:
        i, j = system.index(ln.from_region), system.index(ln.to_region)
        y = ln.V_from * ln.V_to / ln.X
        b[i, i] += y
        b[j, j] += y
        b[i, j] -= y
        b[j, i] -= y
    return b


def solve_steady_state_angles(system: SystemModel, injections: Sequence[float] | Mapping[str, float]) -> np.ndarray:
    """DC power flow: angles (rad) with the first region as slack at 0.

    ``injections`` are net MW per region (generation minus demand) and must
    sum to zero.  Flow on a line is ``V_i*V_j/X*(d_i - d_j)``.
    """
    if isinstance(injections, Mapping):
        p = np.array([float(injections.get(rid, 0.0)) for rid in system.region_ids])
    else:
        p = np.asarray(injections, dtype=float)
    if p.shape != (system.n_regions,):
        raise ValueError("one injection per region required")
    scale = max(1.0, float(np.max(np.abs(p))))
    if abs(p.sum()) > 1e-9 * scale:
        raise ValueError(f"unbalanced injections (sum={p.sum():.6g} MW)")
    n = system.n_regions
    angles = np.zeros(n)
    if n == 1:
        return angles
    b = _network_matrix(system)[1:, 1:]
    if np.linalg.matrix_rank(b) < n - 1:
        raise ValueError("singular network matrix (disconnected network?)")
    angles[1:] = np.linalg.solve(b, p[1:])
    return angles


def dc_flow_injections(system: SystemModel, angles: np.ndarray) -> np.ndarray:
    """Injections implied by ``angles`` (back-substitution of the DC flow)."""
    return _network_matrix(system) @ np.asarray(angles, dtype=float)


def _is_connected(ids: list[str], lines: Sequence[Line]) -> bool:
    if len(ids) <= 1:
        return True
    adj: dict[str, set[str]] = {i: set() for i in ids}
    for ln in lines:
        adj[ln.from_region].add(ln.to_region)
        adj[ln.to_region].add(ln.from_region)
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(ids)


def validate_system(system: SystemModel) -> SystemModel:
    """Check invariants and fill in angles/stiffness.  Returns a new model."""
    if not system.regions:
        raise ConfigError("region", "at least one region required")
    if not (math.isfinite(system.T_g) and system.T_g > 0):
        raise ConfigError("system.t_g", f"non-positive PFR delivery time ({system.T_g})")
    if not (math.isfinite(system.base_frequency) and system.base_frequency > 0):
        raise ConfigError("system.base_frequency", "must be positive")
    ids = system.region_ids
    for k, r in enumerate(system.regions):
        r.validate(f"region[{k}]")
    if len(set(ids)) != len(ids):
        raise ConfigError("region", "region labels must be unique")
    for k, ln in enumerate(system.lines):
        p = f"line[{k}]"
        for key, rid in (("from", ln.from_region), ("to", ln.to_region)):
            if rid not in ids:
                raise ConfigError(f"{p}.{key}", f"unknown region {rid!r}")
        if ln.from_region == ln.to_region:
            raise ConfigError(p, "line connects a region to itself")
        if not (math.isfinite(ln.X) and ln.X > 0):
            raise ConfigError(f"{p}.x", f"non-positive reactance ({ln.X})")
        if not (ln.V_from > 0 and ln.V_to > 0):
            raise ConfigError(f"{p}.v_from", "non-positive voltage")
        if ln.T is not None and not (math.isfinite(ln.T) and ln.T > 0):
            raise ConfigError(f"{p}.stiffness", f"non-positive stiffness ({ln.T})")
    if not _is_connected(ids, system.lines):
        raise ConfigError("line", "line graph over regions is disconnected")
    return system


def populate_stiffness(system: SystemModel, injections: Mapping[str, float] | None = None) -> SystemModel:
    """Fill missing angles (DC flow from ``injections``, else flat) and stiffness."""
    lines = list(system.lines)
    if any(ln.T is None and (ln.delta_ss_from is None or ln.delta_ss_to is None) for ln in lines):
        inj = injections or {}
        angles = solve_steady_state_angles(system, inj)
        amap = dict(zip(system.region_ids, angles))
        lines = [
            ln
            if ln.delta_ss_from is not None and ln.delta_ss_to is not None
            else replace(ln, delta_ss_from=float(amap[ln.from_region]), delta_ss_to=float(amap[ln.to_region]))
            for ln in lines
        ]
    out = []
    for k, ln in enumerate(lines):
        if ln.T is None:
            if abs(ln.angle_difference) >= math.pi / 2:
                raise ConfigError(f"line[{k}]", "steady-state angle difference beyond pi/2")
            try:
                ln = replace(ln, T=compute_stiffness(ln))
            except ValueError as exc:
                raise ConfigError(f"line[{k}]", str(exc)) from exc
        out.append(ln)
    return replace(system, lines=tuple(out))


# -- document I/O ------------------------------------------------------------

_REGION_KEYS = {"id", "h", "d", "p_d", "r", "efr", "efr_delay", "p_l", "injection"}
_LINE_KEYS = {"from", "to", "v_from", "v_to", "x", "delta_ss_from", "delta_ss_to", "stiffness"}


def _num(doc: Mapping[str, Any], key: str, path: str, default: float | None = None) -> float:
    if key not in doc:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    return float(v)


def _opt(doc: Mapping[str, Any], key: str, path: str) -> float | None:
    return _num(doc, key, path) if key in doc else None


def parse_config(doc: Mapping[str, Any]) -> Config:
    """Validate a parsed config mapping and build a :class:`Config`."""
    if not isinstance(doc, Mapping):
        raise ConfigError("", "document must be a table")
    sysdoc = doc.get("system", {})
    if not isinstance(sysdoc, Mapping):
        raise ConfigError("system", "must be a table")
    regions_doc = doc.get("region", [])
    if not isinstance(regions_doc, list):
        raise ConfigError("region", "must be an array of tables")
    regions = []
    injections: dict[str, float] = {}
    for k, rd in enumerate(regions_doc):
        p = f"region[{k}]"
        if not isinstance(rd, Mapping):
            raise ConfigError(p, "must be a table")
        unknown = set(rd) - _REGION_KEYS
        if unknown:
            raise ConfigError(f"{p}.{sorted(unknown)[0]}", "unknown key")
        if "id" not in rd or not isinstance(rd["id"], str):
            raise ConfigError(f"{p}.id", "missing or non-string region label")
        regions.append(
            RegionParams(
                id=rd["id"],
                H=_num(rd, "h", p),
                D=_num(rd, "d", p, 0.0),
                P_D=_num(rd, "p_d", p),
                R=_num(rd, "r", p, 0.0),
                EFR=_num(rd, "efr", p, 0.0),
                EFR_delay=_num(rd, "efr_delay", p, 0.0),
                P_L=_num(rd, "p_l", p, 0.0),
            )
        )
        if "injection" in rd:
            injections[rd["id"]] = _num(rd, "injection", p)
    lines_doc = doc.get("line", [])
    if not isinstance(lines_doc, list):
        raise ConfigError("line", "must be an array of tables")
    lines = []
    for k, ld in enumerate(lines_doc):
        p = f"line[{k}]"
        if not isinstance(ld, Mapping):
            raise ConfigError(p, "must be a table")
        unknown = set(ld) - _LINE_KEYS
        if unknown:
            raise ConfigError(f"{p}.{sorted(unknown)[0]}", "unknown key")
        for key in ("from", "to"):
            if not isinstance(ld.get(key), str):
                raise ConfigError(f"{p}.{key}", "missing region label")
        x = _num(ld, "x", p)
        if not x > 0:
            raise ConfigError(f"{p}.x", f"non-positive reactance ({x})")
        lines.append(
            Line(
                from_region=ld["from"],
                to_region=ld["to"],
                V_from=_num(ld, "v_from", p, 400.0),
                V_to=_num(ld, "v_to", p, 400.0),
                X=x,
                delta_ss_from=_opt(ld, "delta_ss_from", p),
                delta_ss_to=_opt(ld, "delta_ss_to", p),
                T=_opt(ld, "stiffness", p),
            )
        )
    system = SystemModel(
        regions=tuple(regions),
        lines=tuple(lines),
        T_g=_num(sysdoc, "t_g", "system", 10.0),
        base_frequency=_num(sysdoc, "base_frequency", "system", 50.0),
    )
    validate_system(system)
    if injections and set(injections) != set(system.region_ids):
        raise ConfigError("region.injection", "give an injection for every region or none")
    try:
        system = populate_stiffness(system, injections)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("region.injection", str(exc)) from exc

    fault = None
    if "fault" in doc:
        fd = doc["fault"]
        if not isinstance(fd, Mapping) or not isinstance(fd.get("region"), str):
            raise ConfigError("fault.region", "missing region label")
        fault = FaultSpec(region=fd["region"], P_L=_num(fd, "p_l", "fault"))
        fault.validate(system)
    limits = None
    if "limits" in doc:
        ld = doc["limits"]
        limits = Limits(
            rocof_max=_num(ld, "rocof_max", "limits"),
            df_max=_num(ld, "df_max", "limits"),
            df_ss_max=_num(ld, "df_ss_max", "limits"),
        )
        limits.validate()
    return Config(system=system, fault=fault, limits=limits, injections=injections)


def load_config(source: str | Path | Mapping[str, Any]) -> Config:
    """Load a config from a TOML path, TOML text, or an already-parsed mapping."""
    if isinstance(source, Mapping):
        return parse_config(source)
    path = Path(source)
    if isinstance(source, Path) or (len(str(source)) < 4096 and "\n" not in str(source) and path.exists()):
        text = path.read_text()
    else:
        text = str(source)
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("", f"syntax error: {exc}") from exc
    return parse_config(doc)


def load_system(source: str | Path | Mapping[str, Any]) -> SystemModel:
    return load_config(source).system


def config_to_dict(
    system: SystemModel,
    fault: FaultSpec | None = None,
    limits: Limits | None = None,
    injections: Mapping[str, float] | None = None,
) -> dict[str, Any]:
    doc: dict[str, Any] = {"system": {"t_g": system.T_g, "base_frequency": system.base_frequency}}
    doc["region"] = []
    for r in system.regions:
        rd = {"id": r.id, "h": r.H, "d": r.D, "p_d": r.P_D, "r": r.R,
              "efr": r.EFR, "efr_delay": r.EFR_delay, "p_l": r.P_L}
        if injections and r.id in injections:
            rd["injection"] = float(injections[r.id])
        doc["region"].append(rd)
    doc["line"] = []
    for ln in system.lines:
        ld: dict[str, Any] = {"from": ln.from_region, "to": ln.to_region,
                              "v_from": ln.V_from, "v_to": ln.V_to, "x": ln.X}
        if ln.delta_ss_from is not None:
            ld["delta_ss_from"] = ln.delta_ss_from
        if ln.delta_ss_to is not None:
            ld["delta_ss_to"] = ln.delta_ss_to
        if ln.T is not None:
            ld["stiffness"] = ln.T
        doc["line"].append(ld)
    if not doc["line"]:
        del doc["line"]
    if fault is not None:
        doc["fault"] = {"region": fault.region, "p_l": fault.P_L}
    if limits is not None:
        doc["limits"] = {"rocof_max": limits.rocof_max, "df_max": limits.df_max, "df_ss_max": limits.df_ss_max}
    return doc


def dump_config(system: SystemModel, fault: FaultSpec | None = None, limits: Limits | None = None) -> str:
    """Serialise to TOML; ``load_config(dump_config(m)).system == m``."""
    return tomli_w.dumps(config_to_dict(system, fault, limits))
