import numpy as np
import pytest

from regfreq.model import FaultSpec, Line, RegionParams, SystemModel

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

# documented realistic ranges (MW, MW s, MW/Hz)
RANGES = {
    "H": (5e3, 150e3),
    "Dp": (100.0, 1500.0),
    "R": (0.0, 3e3),
    "T": (1e3, 50e3),
    "P_L": (300.0, 1800.0),
}


def two_region(H1, H2, D1, D2, R1, R2, T, T_g=10.0, ids=("a", "b")):
    """Two-region system with damping given directly as D' (P_D = 1)."""
    return SystemModel(
        regions=(
            RegionParams(ids[0], H=H1, D=D1, P_D=1.0, R=R1),
            RegionParams(ids[1], H=H2, D=D2, P_D=1.0, R=R2),
        ),
        lines=(Line(ids[0], ids[1], T=T),),
        T_g=T_g,
    )


def random_two_region(rng: np.random.Generator):
    u = lambda k: rng.uniform(*RANGES[k])  # noqa: E731
    system = two_region(u("H"), u("H"), u("Dp"), u("Dp"), u("R"), u("R"), u("T"))
    fault = FaultSpec("a" if rng.random() < 0.5 else "b", u("P_L"))
    return system, fault


@pytest.fixture
def gb_pair():
    """England/Scotland-like pair with the fault in the lighter area."""
    system = SystemModel(
        regions=(
            RegionParams("england", H=20000.0, D=0.02, P_D=30000.0, R=900.0),
            RegionParams("scotland", H=7000.0, D=0.02, P_D=7000.0, R=100.0),
        ),
        lines=(Line("england", "scotland", T=12000.0),),
        T_g=10.0,
    )
    return system, FaultSpec("scotland", 1400.0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
