import json
from pathlib import Path

import numpy as np
import pytest

from stopped_euler.cli import main
from stopped_euler.config import parse_config
from stopped_euler.errors import ConfigurationError
from stopped_euler.io import read_csv

GOLDEN = Path(__file__).parent / "golden"

MINIMAL = """\
[model]
eps = 1.0
kappa = 1.0
rho = 1.0
sigma = 0.25
T = 1.0

[scheme]
N = 4
n = 4
m = 4

[analysis]
M_samples = 2
seeds = [20240601]
"""

STIFF = """\
[model]
eps = 1.0
kappa = 1.0
rho = 1.0
sigma = 0.0
T = 1.0
xi_scale = 4096.0

[scheme]
N = 8
n = 8
m = 8

[analysis]
M_samples = 4
seeds = [5]
bootstrap = 50
"""

CONVERGE = MINIMAL.replace("M_samples = 2", "M_samples = 8\nreference = [64, 8, 8]\nbootstrap = 50") + """
[converge]
axis = "temporal"
values = [4, 8, 16]
fixed = { n = 8, m = 8 }
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def tree_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


def schema(obj):
    if isinstance(obj, dict):
        return {k: schema(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [schema(obj[0])] if obj else []
    if isinstance(obj, bool):
        return "bool"
    if isinstance(obj, (int, float)) or obj in ("inf", "-inf", "nan"):
        return "number"
    return type(obj).__name__


def test_simulate_minimal_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    assert main(["simulate", "--config", cfg, "--output", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", cfg, "--output", str(tmp_path / "b"), "--threads", "3"]) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    traj = [k for k in a if k.startswith("traj_")]
    assert traj == ["traj_N4_n4_m4_s0000.csv", "traj_N4_n4_m4_s0001.csv"]
    assert a == b


def test_trajectory_csv_round_trip(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    main(["simulate", "--config", cfg, "--output", str(tmp_path)])
    comments, header, rows = read_csv(tmp_path / "traj_N4_n4_m4_s0000.csv")
    assert "seed=20240601" in comments[0] and "schema=1" in comments[0]
    assert header == ["k", "t", "c_1", "c_2", "c_3", "c_4", "h_norm", "h_eta_norm", "frozen"]
    arr = np.array(rows)
    assert arr.shape == (5, 9)
    np.testing.assert_array_equal(arr[:, 0], np.arange(5))
    np.testing.assert_allclose(arr[:, 1], np.linspace(0, 1, 5))
    np.testing.assert_allclose(arr[:, 6], np.sqrt(np.sum(arr[:, 2:6] ** 2, axis=1)), rtol=1e-15)
    assert set(arr[:, 8]) <= {0.0, 1.0} and arr[0, 8] == 0.0
    summary = json.loads((tmp_path / "simulate_summary.json").read_text())
    assert summary["runs"][0]["diverged"] == 0


def test_seed_flag_overrides(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    main(["simulate", "--config", cfg, "--output", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--output", str(tmp_path / "b"), "--seed", "99"])
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a["traj_N4_n4_m4_s0000.csv"] != b["traj_N4_n4_m4_s0000.csv"]
    assert b"seed=99" in b["traj_N4_n4_m4_s0000.csv"]


def test_missing_field_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL.replace("sigma = 0.25\n", ""))
    assert main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "model.sigma" in err and "line" in err


@pytest.mark.parametrize("bad, field", [
    ("p = 1.5", "analysis.p"),
    ("eta = 0.5", "analysis.eta"),
    ("bogus = 1", "analysis.bogus"),
])
def test_invalid_analysis_exit_2(tmp_path, capsys, bad, field):
    cfg = write(tmp_path, MINIMAL.replace("M_samples = 2", f"M_samples = 2\n{bad}"))
    assert main(["moments", "--config", cfg, "--output", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert field in err and "line 15" in err


def test_model_and_scheme_constraints_exit_2(tmp_path, capsys):
    for old, new, field in (("T = 1.0", "T = 1.0\nq = 1.0", "model.q"),
                            ("N = 4", "N = 4\ntheta = 0.3", "scheme.theta")):
        cfg = write(tmp_path, MINIMAL.replace(old, new))
        assert main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == 2
        assert field in capsys.readouterr().err


def test_malformed_toml_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL + "\n[oops\n")
    assert main(["simulate", "--config", cfg]) == 2
    assert "line" in capsys.readouterr().err


def test_converge_synthetic(tmp_path):
    assert main(["converge", "--synthetic", "h^0.5", "--output", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "rate_synthetic.json").read_text())
    assert d["fitted_slope"] == pytest.approx(0.5, abs=1e-12)
    assert main(["converge", "--synthetic", "2*h^1", "--output", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "rate_synthetic.json").read_text())["fitted_slope"] == pytest.approx(1.0, abs=1e-12)
    assert main(["converge", "--synthetic", "h**x", "--output", str(tmp_path)]) == 2


def test_converge_needs_three_resolutions(tmp_path):
    cfg = write(tmp_path, CONVERGE.replace("values = [4, 8, 16]", "values = [4, 8]"))
    assert main(["converge", "--config", cfg, "--output", str(tmp_path)]) == 2


def test_converge_reference_divisibility(tmp_path, capsys):
    cfg = write(tmp_path, CONVERGE.replace("values = [4, 8, 16]", "values = [4, 8, 24]"))
    assert main(["converge", "--config", cfg, "--output", str(tmp_path)]) == 2
    assert "reference" in capsys.readouterr().err


def test_converge_run(tmp_path):
    cfg = write(tmp_path, CONVERGE)
    assert main(["converge", "--config", cfg, "--output", str(tmp_path / "a")]) == 0
    assert main(["converge", "--config", cfg, "--output", str(tmp_path / "b")]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    _, header, rows = read_csv(tmp_path / "a" / "rate_temporal.csv")
    assert header == ["resolution", "error", "ci_low", "ci_high"]
    assert [r[0] for r in rows] == [4.0, 8.0, 16.0]
    assert all(lo <= e <= hi for _, e, lo, hi in rows)


def test_moments_linear_case_passes(tmp_path):
    text = MINIMAL.replace("kappa = 1.0", "kappa = 0.0").replace("sigma = 0.25", "sigma = 0.0")
    cfg = write(tmp_path, text.replace("N = 4", "N = [4, 8]").replace("M_samples = 2", "M_samples = 2\nbootstrap = 20"))
    assert main(["moments", "--config", cfg, "--output", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "moments.json").read_text())
    assert d["passed"] and d["moment_bound"]["worst_margin"] > 0
    assert d["freeze"]["fractions"] == [0.0, 0.0]


def test_compare_stiff_and_golden_schema(tmp_path):
    cfg = write(tmp_path, STIFF)
    assert main(["compare", "--config", cfg, "--output", str(tmp_path / "a")]) == 0
    assert main(["compare", "--config", cfg, "--output", str(tmp_path / "b")]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    d = json.loads((tmp_path / "a" / "compare.json").read_text())
    rep = d["reports"][0]
    assert rep["diverged_fraction"] == {"stopped": 0.0, "untamed": 1.0}
    assert rep["within_envelope"]["stopped"] == 1.0
    golden = json.loads((GOLDEN / "compare_schema.json").read_text())
    assert schema(d) == golden


def test_compare_tame_agrees(tmp_path):
    text = STIFF.replace("xi_scale = 4096.0", "xi_scale = 1.0").replace("kappa = 1.0", "kappa = 0.2")
    cfg = write(tmp_path, text)
    assert main(["compare", "--config", cfg, "--output", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "compare.json").read_text())["reports"][0]
    assert rep["diverged_fraction"] == {"stopped": 0.0, "untamed": 0.0}
    assert rep["max_deviation"] == 0.0


def test_config_requires_seeds_or_flag():
    text = MINIMAL.replace("seeds = [20240601]\n", "")
    with pytest.raises(ConfigurationError, match="analysis.seeds"):
        parse_config(text)
    assert parse_config(text, seed_override=7).analysis.seeds == (7,)


def test_config_resolution_grid():
    cfg = parse_config(MINIMAL.replace("N = 4", "N = [4, 8]").replace("n = 4", "n = [2, 4]"))
    assert cfg.resolutions() == [(4, 2, 4), (4, 4, 4), (8, 2, 4), (8, 4, 4)]


def test_missing_config_exit_2(tmp_path):
    assert main(["simulate", "--output", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "none.toml")]) == 2
