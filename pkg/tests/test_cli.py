import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from regfreq.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GB = CONFIGS / "gb_two_region.toml"

SMALL_SWEEP = """
[sweep]
count = 170
scheme = "lhs"
seed = 4
fault_regions = ["scotland"]
t_end = 10.0

[sweep.ranges]
"H.england" = [5000.0, 30000.0]
"H.scotland" = [5000.0, 10000.0]
"R.england" = [700.0, 1100.0]
"P_L" = [1300.0, 1800.0]
"""

STIFF = """
[[region]]
id = "a"
h = 5000.0
d = 0.1
p_d = 1000.0

[[region]]
id = "b"
h = 5000.0
d = 0.1
p_d = 1000.0

[[line]]
from = "a"
to = "b"
x = 40.0
stiffness = 1e9

[fault]
region = "a"
p_l = 1000.0
"""


def test_simulate_writes_trace_metrics_manifest(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert main(["simulate", str(GB), "--t-end", "5", "--out", str(out)]) == 0
    header = out.read_text().splitlines()[0]
    assert header == "t,df_england,df_scotland,dp_import_england,dp_import_scotland"
    metrics = json.loads(out.with_suffix(".metrics.json").read_text())
    assert metrics["nadir"]["scotland"] < 0
    man = json.loads(out.with_suffix(".manifest.json").read_text())
    assert man["command"] == "simulate" and man["outputs"][0] == str(out)
    assert "version" in man and man["wall_clock"] >= 0


def test_simulate_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate", str(GB), "--t-end", "3", "--out", str(a)])
    main(["simulate", str(GB), "--t-end", "3", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_coi_and_analytic2(tmp_path, capsys):
    assert main(["coi", str(GB), "--out", str(tmp_path / "coi.csv")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["nadir"] < 0 and 0 < doc["t_star"] <= 10
    assert main(["analytic2", str(GB), "--out", str(tmp_path / "an.csv")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["root_structure"] == "one real root and one complex-conjugate pair"
    assert set(doc["modes"]) == {"england", "scotland"}


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "missing.toml")]) == 2
    assert main(["analytic2", str(CONFIGS / "three_region.toml"), "--out", str(tmp_path / "x.csv")]) == 2
    assert "exactly 2 regions" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text(GB.read_text().replace("h = 7000.0", "h = -7000.0"))
    assert main(["simulate", str(bad), "--out", str(tmp_path / "y.csv")]) == 2


def test_numeric_failure_exit_3(tmp_path, capsys):
    cfg = tmp_path / "stiff.toml"
    cfg.write_text(STIFF)
    code = main(["simulate", str(cfg), "--dt", "0.1", "--t-end", "2000", "--out", str(tmp_path / "s.csv")])
    assert code == 3
    assert "numeric failure" in capsys.readouterr().err


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    d = tmp_path_factory.mktemp("fit")
    sweep = d / "sweep.toml"
    sweep.write_text(SMALL_SWEEP)
    code = main(["fit", str(GB), str(sweep), "--out-models", str(d / "m.json"), "--samples", str(d / "s.csv")])
    return d, code


def test_fit_outputs_and_rerun_identical(fitted):
    d, code = fitted
    assert code == 0
    doc = json.loads((d / "m.json").read_text())
    assert doc["format"] == "regfreq-models/1" and doc["metadata"]["seed"] == 4
    man = json.loads((d / "s.manifest.json").read_text())
    assert man["seed"] == 4
    code = main(["fit", str(GB), str(d / "sweep.toml"), "--out-models", str(d / "m2.json"), "--samples", str(d / "s2.csv")])
    assert code == 0
    assert (d / "m.json").read_bytes() == (d / "m2.json").read_bytes()
    assert (d / "s.csv").read_bytes() == (d / "s2.csv").read_bytes()


def test_seed_override(fitted, tmp_path):
    d, _ = fitted
    small = tmp_path / "sweep.toml"
    small.write_text(SMALL_SWEEP.replace("count = 170", "count = 3"))
    code = main(["--seed", "8", "fit", str(GB), str(small), "--out-models", str(tmp_path / "m.json"), "--samples", str(tmp_path / "s.csv")])
    # three samples cannot support a regression
    assert code == 2
    header, *rows = (tmp_path / "s.csv").read_text().splitlines()
    assert len(rows) == 3
    main(["fit", str(GB), str(small), "--out-models", str(tmp_path / "m4.json"), "--samples", str(tmp_path / "s4.csv")])
    assert (tmp_path / "s4.csv").read_text() != (tmp_path / "s.csv").read_text()


def test_constraints_command(fitted, tmp_path, capsys):
    d, _ = fitted
    stem = tmp_path / "c"
    assert main(["constraints", str(GB), str(d / "m.json"), "--out", str(stem)]) == 0
    assert (tmp_path / "c.json").exists() and (tmp_path / "c.lp").exists()
    assert "Subject To" in (tmp_path / "c.lp").read_text()
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"feasible", "active_block", "failed"}
    assert main(["constraints", str(GB), str(d / "m.json"), "--grid-points", "7", "--out", str(stem)]) == 2


def test_validate_exit_codes(fitted, tmp_path):
    d, _ = fitted
    sweep = tmp_path / "v.toml"
    sweep.write_text(SMALL_SWEEP.replace("count = 170", "count = 4").replace("seed = 4", "seed = 41"))
    code = main(["validate", str(GB), str(d / "m.json"), str(sweep), "--out", str(tmp_path / "v.json")])
    doc = json.loads((tmp_path / "v.json").read_text())
    assert code == (4 if doc["violations"] else 0)
    assert doc["summary"]["points"] == 4
    # models that bound every term far below reality accept every point;
    # with a RoCoF limit under the initial COI RoCoF each one is insecure
    models = json.loads((d / "m.json").read_text())
    for m in models["rocof"] + models["integrals"]:
        m["intercept"], m["conservative_offset"] = -1e6, 0.0
        m["coefficients"] = {k: 0.0 for k in m["coefficients"]}
    (tmp_path / "wrong.json").write_text(json.dumps(models))
    tight = tmp_path / "tight.toml"
    text = GB.read_text().replace("rocof_max = 0.125", "rocof_max = 0.01")
    tight.write_text(text.replace("df_max = 0.8", "df_max = 3.0").replace("df_ss_max = 0.5", "df_ss_max = 3.0"))
    code = main(["validate", str(tight), str(tmp_path / "wrong.json"), str(sweep), "--out", str(tmp_path / "v2.json")])
    doc = json.loads((tmp_path / "v2.json").read_text())
    assert code == 4
    assert doc["summary"]["violations"] == doc["summary"]["points"] == 4


def test_console_script_help():
    exe = shutil.which("regfreq")
    cmd = [exe] if exe else [sys.executable, "-m", "regfreq.cli"]
    res = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "validate" in res.stdout
