import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_region
from regfreq.dynamics import simulate
from regfreq.fitting import (
    LinearModel,
    ModelBundle,
    RegressionError,
    SamplePoint,
    SweepError,
    SweepSpec,
    coi_residual,
    fit_damped_sinusoid,
    fit_linear_model,
    fit_models,
    regress_energy_integrals,
    regress_rocof_term,
    run_sweep,
    sample_points,
    sample_targets,
)
from regfreq.laplace import build_laplace_solution, extract_modes, partial_fractions
from regfreq.model import FaultSpec, Line, RegionParams, SystemModel

BASE = SystemModel(
    regions=(
        RegionParams("england", H=20000.0, D=0.02, P_D=30000.0, R=900.0),
        RegionParams("scotland", H=7000.0, D=0.02, P_D=7000.0, R=100.0),
    ),
    lines=(Line("england", "scotland", T=12000.0),),
)
RANGES = {
    "H.england": (5000.0, 30000.0),
    "H.scotland": (5000.0, 10000.0),
    "Dp.england": (300.0, 1000.0),
    "Dp.scotland": (100.0, 300.0),
    "R.england": (700.0, 1100.0),
    "R.scotland": (0.0, 200.0),
    "T.england-scotland": (5000.0, 25000.0),
    "P_L": (1300.0, 1800.0),
}


@pytest.mark.parametrize(
    "a, A, w, phi, C",
    [(0.05, 0.08, 1.3, 0.4, -0.002), (0.3, 0.02, 2.9, -2.0, 0.01), (0.002, 0.1, 0.45, 3.0, 0.0)],
)
def test_synthetic_recovery(a, A, w, phi, C):
    t = np.linspace(0.0, 10.0, 10001)
    y = np.exp(-a * t) * A * np.sin(w * t + phi) + C
    fit = fit_damped_sinusoid(t, y)
    m = fit.mode
    assert fit.converged
    for got, want in ((m.a, a), (m.A, A), (m.omega, w), (m.phi, phi), (m.C, C)):
        assert got == pytest.approx(want, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(
    a=st.floats(0.0, 0.5),
    A=st.floats(0.005, 0.2),
    w=st.floats(0.5, 4.0),
    phi=st.floats(-3.1, 3.1),
    C=st.floats(-0.01, 0.01),
)
def test_synthetic_recovery_property(a, A, w, phi, C):
    t = np.linspace(0.0, 10.0, 2001)
    m = fit_damped_sinusoid(t, np.exp(-a * t) * A * np.sin(w * t + phi) + C).mode
    assert m.A * m.omega == pytest.approx(A * w, rel=1e-6, abs=1e-9)


def test_zero_residual():
    t = np.linspace(0, 10, 1001)
    fit = fit_damped_sinusoid(t, np.zeros_like(t))
    assert fit.mode.A == 0.0 and fit.residual_rms == 0.0


def test_simulated_residual_matches_analytic():
    system = two_region(30e3, 5e3, 400.0, 100.0, 1200.0, 300.0, 8000.0)
    fault = FaultSpec("b", 1000.0)
    tr = simulate(system, fault, t_end=10.0)
    for r in ("a", "b"):
        fit = fit_damped_sinusoid(*coi_residual(tr, system, fault, r)).mode
        exact = extract_modes(partial_fractions(build_laplace_solution(system, fault)[r])).mode
        assert fit.A == pytest.approx(exact.A, rel=0.02)
        assert fit.omega == pytest.approx(exact.omega, rel=0.02)
        assert fit.A * fit.omega == pytest.approx(exact.A * exact.omega, rel=0.02)


def test_degenerate_sweep_matches_direct_simulation():
    point = {k: (lo, lo) for k, (lo, _) in RANGES.items()}
    spec = SweepSpec(point, count=1, fault_regions=("scotland",), t_end=10.0)
    res = run_sweep(spec, BASE)
    assert len(res) == 1 and not res.failures
    (system, fault), = sample_points(spec, BASE)
    assert system.region("england").H == 5000.0 and fault.P_L == 1300.0
    tr = simulate(system, fault, t_end=10.0)
    s = res.samples[0]
    assert s.targets["int.scotland@9"] == tr.int_df[-1, 1]
    assert s.targets["nadir.scotland"] == pytest.approx(tr.df[:, 1].min(), abs=0.0)


def test_sweep_determinism():
    spec = SweepSpec(RANGES, count=6, seed=11, fault_regions=("england", "scotland"), t_end=10.0)
    a, b = run_sweep(spec, BASE), run_sweep(spec, BASE)
    assert a.to_csv() == b.to_csv()
    assert [s.targets for s in a] == [s.targets for s in b]


def test_sweep_csv_columns():
    spec = SweepSpec(RANGES, count=2, seed=1, fault_regions=("scotland",), t_end=10.0)
    text = run_sweep(spec, BASE).to_csv()
    header = text.splitlines()[0].split(",")
    assert header[:2] == ["index", "fault_region"]
    assert "Aw.scotland" in header and "dint.england.scotland@0" in header


@pytest.mark.parametrize(
    "ranges, msg",
    [
        ({"H.wales": (5e3, 6e3)}, "unknown region"),
        ({"H.england": (6e3, 5e3)}, "lower bound"),
        ({"H.england": (1e3, 5e3)}, "documented bounds"),
        ({"X.england": (1.0, 2.0)}, "unknown parameter"),
        ({"T.england-wales": (5e3, 6e3)}, "no such line"),
    ],
)
def test_sweep_spec_errors(ranges, msg):
    with pytest.raises(SweepError, match=msg):
        SweepSpec(ranges, count=3).validate(BASE)


def test_sweep_spec_count():
    with pytest.raises(SweepError):
        SweepSpec(RANGES, count=0).validate(BASE)


def test_grid_scheme_covers_corners():
    spec = SweepSpec({"H.england": (5e3, 3e4), "P_L": (300.0, 1800.0)}, count=4, scheme="grid")
    pts = sample_points(spec, BASE)
    got = sorted((s.region("england").H, f.P_L) for s, f in pts)
    assert got == [(5e3, 300.0), (5e3, 1800.0), (3e4, 300.0), (3e4, 1800.0)]


def test_zero_loss_integrals_vanish():
    system = BASE
    targets, _ = sample_targets(system, FaultSpec("scotland", 0.0), [5.0, 10.0], t_end=10.0, analytic=False)
    ints = {k: v for k, v in targets.items() if k.split(".")[0] in ("int", "int_hi", "dint", "dint_hi")}
    assert ints and all(v == 0.0 for v in ints.values())


def _fake(n, f, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        x = {"H.a": rng.uniform(5e3, 5e4), "R.a": rng.uniform(0, 1e3), "P_L": rng.uniform(300, 1800)}
        out.append(SamplePoint(i, "a", x, {"y": f(x, rng)}))
    return out


def test_exactly_linear_targets_zero_offset():
    samples = _fake(60, lambda x, rng: 3.0 + 2e-4 * x["H.a"] - 1e-3 * x["R.a"] + 5e-3 * x["P_L"])
    m = fit_linear_model(samples, "y")
    assert m.diagnostics["max_residual"] < 1e-9
    assert m.conservative_offset < 1e-9
    assert m.coefficients["H.a"] == pytest.approx(2e-4, rel=1e-9)
    assert m.intercept == pytest.approx(3.0, rel=1e-9)


@pytest.mark.parametrize("direction", ["upper", "lower"])
def test_offset_direction_on_training(direction):
    samples = _fake(80, lambda x, rng: 1e-4 * x["H.a"] + rng.normal(0, 0.3))
    m = fit_linear_model(samples, "y", direction)
    assert all(m.holds(s.features, s.targets["y"]) for s in samples)
    assert (m.conservative_offset >= 0) == (direction == "upper")


def test_quantile_offset_is_smaller():
    samples = _fake(200, lambda x, rng: rng.normal(0, 1.0))
    hi = fit_linear_model(samples, "y", offset_mode="max")
    q = fit_linear_model(samples, "y", offset_mode="quantile", quantile=0.9)
    assert 0 < q.conservative_offset < hi.conservative_offset


def test_rank_deficient_and_too_few():
    samples = _fake(60, lambda x, rng: rng.normal())
    dup = [SamplePoint(s.index, s.fault_region, {**s.features, "H2.a": 2 * s.features["H.a"]}, s.targets) for s in samples]
    with pytest.raises(RegressionError, match="rank"):
        fit_linear_model(dup, "y")
    with pytest.raises(RegressionError, match="samples"):
        fit_linear_model(samples[:20], "y")


def test_constant_feature_dropped():
    samples = _fake(60, lambda x, rng: x["P_L"] * 1e-3)
    fixed = [SamplePoint(s.index, "a", {**s.features, "T.a-b": 9000.0}, s.targets) for s in samples]
    m = fit_linear_model(fixed, "y")
    assert "T.a-b" not in m.coefficients and m.metadata["dropped"] == ["T.a-b"]


def test_model_json_roundtrip():
    m = fit_linear_model(_fake(60, lambda x, rng: rng.normal()), "y")
    again = LinearModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert again == m
    assert "stand-in" in again.metadata["feature_note"]


def test_bundle_roundtrip_and_integral_reference(tmp_path):
    spec = SweepSpec(RANGES, count=320, seed=5, fault_regions=("scotland",), t_end=10.0)
    res = run_sweep(spec, BASE, analytic=False)
    bundle = fit_models(res, BASE)
    bundle.save(tmp_path / "m.json")
    again = ModelBundle.load(tmp_path / "m.json")
    assert again.to_json() == bundle.to_json()
    assert again.metadata["seed"] == 5
    # every model bounds its training targets in its stated direction
    for models in (regress_rocof_term(res), regress_energy_integrals(res)):
        for m in models.values():
            assert all(m.holds(s.features, s.targets[m.target]) for s in res)
    # reference scenario: int_0^{t_k} df of the faulted region near the COI nadir time
    system, fault = BASE, FaultSpec("scotland", 1500.0)
    targets, _ = sample_targets(system, fault, spec.grid(system), t_end=10.0, analytic=False)
    from regfreq.fitting import system_features

    x = system_features(system, fault)
    m = bundle.integral_model("int.scotland@9", "scotland")
    rel = abs(m.predict(x) - targets["int.scotland@9"]) / abs(targets["int.scotland@9"])
    assert rel < 0.1
    assert m.bound(x) >= targets["int.scotland@9"]


def test_loo_offset_covers_in_sample_offset():
    samples = _fake(80, lambda x, rng: 1e-4 * x["H.a"] + rng.normal(0, 0.3))
    loo = fit_linear_model(samples, "y", offset_mode="loo")
    ins = fit_linear_model(samples, "y", offset_mode="max")
    assert loo.conservative_offset >= ins.conservative_offset > 0
    assert loo.coefficients == ins.coefficients
    # jackknife residuals: refit without each sample and compare
    worst = -np.inf
    for i in range(len(samples)):
        m = fit_linear_model(samples[:i] + samples[i + 1:], "y", offset_mode="max", min_ratio=1)
        worst = max(worst, samples[i].targets["y"] - m.predict(samples[i].features))
    assert loo.conservative_offset == pytest.approx(worst, rel=1e-9)
