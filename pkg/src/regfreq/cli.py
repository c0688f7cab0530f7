"""Command-line front end.

    regfreq [--seed N] simulate    CONFIG [--dt] [--t-end] [--out trace.csv]
    regfreq [--seed N] coi         CONFIG [--dt] [--out coi.csv]
    regfreq [--seed N] analytic2   CONFIG [--dt] [--out analytic.csv]
    regfreq [--seed N] fit         CONFIG SWEEP [--out-models models.json] [--samples samples.csv]
    regfreq [--seed N] constraints CONFIG MODELS [--grid-points N] [--mode] [--out stem]
    regfreq [--seed N] validate    CONFIG MODELS SWEEP [--mode] [--out report.json]

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 soundness
violations found by ``validate``.  Every run writes a JSON manifest next
to its first output (``--manifest`` overrides the location).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .coi import aggregate, coi_frequency, coi_nadir, coi_rocof
from .constraints import evaluate, generate_constraints, save, validate_constraints
from .dynamics import simulate, trace_metrics
from .fitting import ModelBundle, RegressionError, SweepError, fit_models, load_sweep_spec, run_sweep
from .laplace import (
    RootStructureError,
    build_laplace_solution,
    extract_modes,
    partial_fractions,
    pole_structure,
    time_domain_solution,
)
from .model import Config, ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VIOLATION = 0, 2, 3, 4


@dataclass
class RunManifest:
    command: str
    config: str
    seed: int | None
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    wall_clock: float = 0.0

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=1) + "\n")


def _csv(header: list[str], columns: list[np.ndarray]) -> str:
    data = np.column_stack(columns)
    lines = [",".join(header)]
    lines += [",".join(repr(v) for v in row) for row in data.tolist()]
    return "\n".join(lines) + "\n"


def _config(path: str, need_fault: bool = True, need_limits: bool = False) -> Config:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("", f"config file {path!r} not found")
    cfg = load_config(p)
    if need_fault and cfg.fault is None:
        raise ConfigError("fault", "config has no [fault] table")
    if need_limits and cfg.limits is None:
        raise ConfigError("limits", "config has no [limits] table")
    return cfg


def _write(path: Path, text: str, manifest: RunManifest) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    manifest.outputs.append(str(path))


def cmd_simulate(args, man: RunManifest) -> int:
    cfg = _config(args.config)
    trace = simulate(cfg.system, cfg.fault, dt=args.dt, t_end=args.t_end)
    m = trace_metrics(trace)
    out = Path(args.out)
    _write(out, trace.to_csv(), man)
    metrics = {
        "rocof_max_abs": m.rocof_max_abs,
        "nadir": m.nadir,
        "nadir_time": m.nadir_time,
        "qss": m.qss,
    }
    text = json.dumps(metrics, indent=1, sort_keys=True) + "\n"
    _write(out.with_suffix(".metrics.json"), text, man)
    print(text, end="")
    return EXIT_OK


def cmd_coi(args, man: RunManifest) -> int:
    cfg = _config(args.config)
    p = aggregate(cfg.system, cfg.fault)
    n = int(round(p.T_g / args.dt))
    t = np.linspace(0.0, p.T_g, n + 1)
    _write(Path(args.out), _csv(["t", "df_coi", "rocof_coi"], [t, coi_frequency(p, t), coi_rocof(p, t)]), man)
    t_star, nadir = coi_nadir(p)
    print(json.dumps({"t_star": t_star, "nadir": nadir, "initial_rocof": -p.P_L / (2 * p.H)}, indent=1))
    return EXIT_OK


def cmd_analytic2(args, man: RunManifest) -> int:
    cfg = _config(args.config)
    if cfg.system.n_regions != 2:
        raise ConfigError("region", "analytic2 requires exactly 2 regions")
    poles = pole_structure(cfg.system)
    rls = build_laplace_solution(cfg.system, cfg.fault)
    n = int(round(cfg.system.T_g / args.dt))
    t = np.linspace(0.0, cfg.system.T_g, n + 1)
    cols, header, report = [t], ["t"], {}
    for r, rl in rls.items():
        pf = partial_fractions(rl)
        cols.append(time_domain_solution(pf)(t))
        header.append(f"df_{r}")
        rep = extract_modes(pf)
        report[r] = {
            "a": rep.mode.a,
            "A": rep.mode.A,
            "omega": rep.mode.omega,
            "phi": rep.mode.phi,
            "C": rep.mode.C,
            "coi_discrepancy": rep.coi_discrepancy,
            "transcription_error": pf.transcription_error,
        }
    _write(Path(args.out), _csv(header, cols), man)
    verdict = "one real root and one complex-conjugate pair" if poles.holds else "root structure does NOT hold"
    print(json.dumps({"root_structure": verdict, "modes": report}, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_fit(args, man: RunManifest) -> int:
    cfg = _config(args.config, need_fault=False)
    spec = load_sweep_spec(args.sweep)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    man.seed = spec.seed
    result = run_sweep(spec, cfg.system, workers=args.workers)
    _write(Path(args.samples), result.to_csv(), man)
    for i, err in result.failures:
        print(f"sample {i} failed: {err}", file=sys.stderr)
    bundle = fit_models(result, cfg.system)
    _write(Path(args.out_models), bundle.to_json(), man)
    diag = {
        "samples": len(result),
        "failures": len(result.failures),
        "crosscheck": result.crosscheck,
        "rocof_models": {f"{r}|{f}": m.diagnostics for (r, f), m in bundle.rocof.items()},
    }
    print(json.dumps(diag, indent=1, sort_keys=True))
    if len(result.failures) > 0.01 * spec.count:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_constraints(args, man: RunManifest) -> int:
    cfg = _config(args.config, need_limits=True)
    bundle = ModelBundle.load(args.models)
    if args.grid_points and args.grid_points != len(bundle.time_grid):
        raise ConfigError("grid-points", f"models were fitted on {len(bundle.time_grid)} grid points, not {args.grid_points}")
    cset = generate_constraints(cfg.system, cfg.fault, cfg.limits, bundle, mode=args.mode)
    js, lp = save(cset, args.out)
    man.outputs += [str(js), str(lp)]
    ev = evaluate(cset)
    print(json.dumps({"feasible": ev.feasible, "active_block": ev.active_block, "failed": ev.failed}, indent=1))
    return EXIT_OK


def cmd_validate(args, man: RunManifest) -> int:
    cfg = _config(args.config, need_fault=False, need_limits=True)
    bundle = ModelBundle.load(args.models)
    spec = load_sweep_spec(args.sweep)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    man.seed = spec.seed
    rep = validate_constraints(bundle, spec, cfg.system, cfg.limits, mode=args.mode, workers=args.workers)
    doc = {"summary": rep.summary(), "margins": rep.margins(), "violations": [asdict(o) for o in rep.violations]}
    _write(Path(args.out), json.dumps(doc, indent=1, sort_keys=True) + "\n", man)
    print(json.dumps(rep.summary(), indent=1, sort_keys=True))
    return EXIT_VIOLATION if rep.violations else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="regfreq", description="Regional frequency dynamics and security constraints")
    ap.add_argument("--seed", type=int, default=None, help="override the sweep seed")
    ap.add_argument("--manifest", default=None, help="manifest path (default: next to the first output)")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="time-domain simulation")
    p.add_argument("config")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=30.0)
    p.add_argument("--out", default="trace.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("coi", help="closed-form uniform-frequency trace")
    p.add_argument("config")
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--out", default="coi.csv")
    p.set_defaults(func=cmd_coi)

    p = sub.add_parser("analytic2", help="closed-form two-region traces and modes")
    p.add_argument("config")
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--out", default="analytic.csv")
    p.set_defaults(func=cmd_analytic2)

    p = sub.add_parser("fit", help="simulation sweep and conservative regressions")
    p.add_argument("config")
    p.add_argument("sweep")
    p.add_argument("--out-models", default="models.json")
    p.add_argument("--samples", default="samples.csv")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("constraints", help="generate linear security constraints")
    p.add_argument("config")
    p.add_argument("models")
    p.add_argument("--grid-points", type=int, default=None)
    p.add_argument("--mode", choices=("interval", "point"), default="interval")
    p.add_argument("--out", default="constraints")
    p.set_defaults(func=cmd_constraints)

    p = sub.add_parser("validate", help="check constraint soundness against simulation")
    p.add_argument("config")
    p.add_argument("models")
    p.add_argument("sweep")
    p.add_argument("--mode", choices=("interval", "point"), default="interval")
    p.add_argument("--out", default="validation.json")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    man = RunManifest(command=args.command, config=args.config, seed=args.seed)
    t0 = time.perf_counter()
    try:
        code = args.func(args, man)
    except (ConfigError, SweepError, RegressionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, RootStructureError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    man.wall_clock = time.perf_counter() - t0
    if man.outputs:
        path = Path(args.manifest) if args.manifest else Path(man.outputs[0]).with_suffix(".manifest.json")
        man.write(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
