import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conftest import two_region
from regfreq.coi import CoiParams, aggregate, coi_frequency, coi_nadir, coi_rocof
from regfreq.dynamics import simulate, trace_metrics
from regfreq.model import FaultSpec, RegionParams, SystemModel

REF = CoiParams(H=100e3, D_prime=500.0, R=1500.0, P_L=1800.0, T_g=10.0)


def _single(p: CoiParams) -> tuple[SystemModel, FaultSpec]:
    return SystemModel((RegionParams("gb", p.H, p.D_prime, 1.0, R=p.R),), T_g=p.T_g), FaultSpec("gb", p.P_L)


def _ode(p: CoiParams, t):
    # independent oracle: integrate the aggregate swing equation with scipy
    rhs = lambda s, f: [(p.R * s / p.T_g - p.P_L - p.D_prime * f[0]) / (2 * p.H)]  # noqa: E731
    sol = solve_ivp(rhs, (0.0, float(np.max(t))), [0.0], t_eval=t, rtol=1e-12, atol=1e-14, method="DOP853")
    return sol.y[0]


def test_aggregate_sums():
    system = two_region(60e3, 40e3, 300.0, 200.0, 1000.0, 500.0, 1e4)
    p = aggregate(system, FaultSpec("a", 1200.0))
    assert (p.H, p.D_prime, p.R, p.P_L, p.T_g) == (100e3, 500.0, 1500.0, 1200.0, 10.0)


def test_aggregate_single_region_identity():
    system, fault = _single(REF)
    assert aggregate(system, fault) == REF


def test_origin():
    assert coi_frequency(REF, 0.0) == 0.0


def test_no_response_limit():
    p = CoiParams(H=50e3, D_prime=800.0, R=0.0, P_L=1000.0, T_g=10.0)
    t = np.linspace(0, 10, 11)
    assert np.allclose(coi_frequency(p, t), -1000.0 / 800.0 * (1 - np.exp(-800.0 * t / 1e5)), rtol=1e-13, atol=0)
    assert coi_rocof(p, 0.0) == pytest.approx(-1000.0 / 1e5, rel=1e-15)


def test_matches_ode_and_simulator():
    t = np.linspace(0.0, 10.0, 101)
    assert np.max(np.abs(coi_frequency(REF, t) - _ode(REF, t))) < 1e-10
    tr = simulate(*_single(REF), t_end=10.0)
    assert coi_frequency(REF, 5.0) == pytest.approx(tr.df[5000, 0], abs=1e-6)


def test_small_damping_is_stable():
    p = CoiParams(H=100e3, D_prime=1e-9, R=1500.0, P_L=1800.0, T_g=10.0)
    t = np.linspace(0, 10, 5)
    undamped = -1800.0 * t / 2e5 + 1500.0 * t**2 / (4e5 * 10.0)
    assert np.allclose(coi_frequency(p, t), undamped, rtol=1e-9)


def test_outside_ramp():
    with pytest.raises(ValueError):
        coi_frequency(REF, 10.5)
    with pytest.raises(ValueError):
        coi_rocof(REF, -1.0)


def test_nadir_matches_dense_simulation():
    t_star, nadir = coi_nadir(REF)
    tr = simulate(*_single(REF), t_end=10.0)
    m = trace_metrics(tr)
    # the derivative is still negative at T_g for these parameters
    assert t_star == REF.T_g
    assert abs(m.nadir_time["gb"] - t_star) <= tr.dt
    assert nadir == pytest.approx(m.nadir["gb"], abs=1e-5)


def test_interior_nadir():
    p = CoiParams(H=20e3, D_prime=500.0, R=2500.0, P_L=1000.0, T_g=10.0)
    t_star, nadir = coi_nadir(p)
    assert 0 < t_star < p.T_g
    assert abs(coi_rocof(p, t_star)) < 1e-12
    tr = simulate(*_single(p), t_end=10.0)
    assert abs(tr.t[np.argmin(tr.df[:, 0])] - t_star) <= tr.dt
    assert nadir == pytest.approx(tr.df[:, 0].min(), abs=1e-5)


def test_strong_response_nadir_near_origin():
    p = CoiParams(H=100e3, D_prime=500.0, R=3e5, P_L=300.0, T_g=10.0)
    t_star, nadir = coi_nadir(p)
    assert t_star < 0.05 and abs(nadir) < 1e-4


def test_low_inertia_case_is_insecure():
    # even split of a light system, 1.8 GW loss: the aggregate already breaches 0.8 Hz
    system = two_region(3500.0, 3500.0, 200.0, 200.0, 200.0, 200.0, 10053.1)
    _, nadir = coi_nadir(aggregate(system, FaultSpec("a", 1800.0)))
    assert nadir < -0.8


@settings(max_examples=60)
@given(
    H=st.floats(5e3, 1.5e5),
    D=st.floats(100, 1500),
    R=st.floats(0, 3000),
    L=st.floats(300, 1800),
)
def test_nadir_is_minimum_on_grid(H, D, R, L):
    p = CoiParams(H, D, R, L, 10.0)
    t_star, nadir = coi_nadir(p)
    grid = coi_frequency(p, np.linspace(0, 10, 2001))
    assert nadir <= grid.min() + 1e-12
    assert 0 < t_star <= 10.0
