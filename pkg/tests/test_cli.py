import json
import os
import subprocess
import sys

import pytest

from carlemanlab.cli import EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, EXIT_TOLERANCE, build_parser, run
from carlemanlab.config import RunConfig, parse_grid_spec
from carlemanlab.errors import ConfigError
from carlemanlab.reports import format_float, to_csv, to_json


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def load_json(out, name):
    with open(os.path.join(out, f"{name}.json")) as fh:
        return json.load(fh)


def test_parser_lists_commands():
    parser = build_parser()
    for cmd in ("geometry-check", "pseudoconvexity", "carleman", "kerr-certificate", "vanishing-orders"):
        assert parser.parse_args([cmd]).command == cmd


def test_grid_spec():
    assert parse_grid_spec("f=1e-3:1e-1:4,sigma=-1:1:3") == {
        "f_min": "1e-3", "f_max": "1e-1", "f_count": "4", "sigma_min": "-1", "sigma_max": "1", "sigma_count": "3",
    }
    for bad in ("f=1:2", "x=1:2:3", "f"):
        with pytest.raises(ConfigError):
            parse_grid_spec(bad)


def test_config_layering(tmp_path):
    path = write_config(tmp_path, "[kerr]\na = 0.7\nm = 2\n")
    cfg = RunConfig.load(path, env={"CARLEMANLAB_KERR_A": "0.9"}, overrides={"kerr": {"m": "3"}})
    assert cfg.getfloat("kerr", "a") == 0.9
    assert cfg.getfloat("kerr", "m") == 3.0
    assert cfg.getfloat("kerr", "theta0") == 1.0


@pytest.mark.parametrize(
    "text",
    [
        "[background]\nfamily = Nope\n",
        "[background]\nfamily = Minkowski\nm = 1\n",
        "[tolerances]\nchristoffel = -1\n",
        "[grid]\nf_min = 2\n",
        "[sweep]\nlambdas = 20,abc\n",
        "[reparam]\nkind = F3\n",
        "not an ini file",
    ],
)
def test_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        RunConfig.load(write_config(tmp_path, text), env={})


def test_unknown_env_section():
    with pytest.raises(ConfigError):
        RunConfig.load(env={"CARLEMANLAB_NOPE_X": "1"})


def test_report_format():
    assert format_float(0.1) == "1.00000000000e-01"
    assert format_float(float("inf")) == "inf"
    assert to_json({"a": 1.0, "b": [1, float("nan")]}) == '{\n  "a": 1.00000000000e+00,\n  "b": [\n    1,\n    "nan"\n  ]\n}\n'
    assert to_csv(["x", "y"], [[1, 0.5]]) == "x,y\n1,5.00000000000e-01\n"


def test_geometry_check_minkowski(tmp_path):
    out = str(tmp_path / "out")
    code, result = run(["geometry-check", "--out", out], env={})
    assert code == EXIT_OK and result.passed
    summary = load_json(out, "geometry-check")
    assert summary["max_christoffel_discrepancy"] <= 1e-6
    for ext in ("json", "csv"):
        assert os.path.exists(os.path.join(out, f"geometry-check.{ext}"))
    assert os.path.exists(os.path.join(out, "geometry-check_plot.dat"))


def test_geometry_check_coarse_step(tmp_path, capsys):
    path = write_config(tmp_path, "[background]\nfamily = Schwarzschild\n[geometry]\nstep = 1e-2\n")
    code, result = run(["geometry-check", "--config", path, "--out", str(tmp_path / "o")], env={})
    assert code == EXIT_TOLERANCE
    assert result.summary["status"] == "StepTooLarge"
    assert "FAIL" in capsys.readouterr().out


def test_geometry_check_kerr_a0_note(tmp_path, capsys):
    path = write_config(tmp_path, "[background]\nfamily = Kerr\na = 0\n")
    code, result = run(["geometry-check", "--config", path, "--out", str(tmp_path / "o")], env={})
    assert code == EXIT_OK
    assert "reduces to Schwarzschild" in result.notes
    assert "reduces to Schwarzschild" in capsys.readouterr().out


def test_reports_are_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = str(tmp_path / f"o{k}")
        run(["geometry-check", "--out", out, "--seed", "5"], env={})
        with open(os.path.join(out, "geometry-check.csv"), "rb") as fh:
            csv_bytes = fh.read()
        with open(os.path.join(out, "geometry-check.json"), "rb") as fh:
            outs.append((fh.read().replace(out.encode(), b"OUT"), csv_bytes))
    assert outs[0] == outs[1]


def test_env_override(tmp_path):
    out = str(tmp_path / "o")
    code, result = run(["kerr-certificate", "--out", out], env={"CARLEMANLAB_KERR_A": "0.9"})
    assert code == EXIT_OK and result.summary["a"] == 0.9


def test_config_error_exit(tmp_path):
    path = write_config(tmp_path, "[background]\nfamily = Nope\n")
    assert run(["geometry-check", "--config", path], env={})[0] == EXIT_CONFIG
    assert run(["geometry-check", "--config", str(tmp_path / "missing.ini")], env={})[0] == EXIT_CONFIG
    assert run(["carleman", "--lambda", "20,-1"], env={})[0] == EXIT_CONFIG


def test_domain_error_exit(tmp_path):
    path = write_config(tmp_path, "[kerr]\nr_min = 1.5\n")
    assert run(["kerr-certificate", "--config", path, "--out", str(tmp_path / "o")], env={})[0] == EXIT_DOMAIN


@pytest.mark.parametrize("a", ["0.5", "0.9", "2"])
def test_kerr_certificate(tmp_path, a):
    out = str(tmp_path / "o")
    code, _ = run(["kerr-certificate", "--out", out], env={"CARLEMANLAB_KERR_A": a})
    assert code == EXIT_OK
    summary = load_json(out, "kerr-certificate")
    assert len(summary["components"]) == 12
    assert all(row["pass"] for row in summary["components"])


def test_kerr_certificate_a0(tmp_path):
    out = str(tmp_path / "o")
    code, result = run(["kerr-certificate", "--out", out], env={"CARLEMANLAB_KERR_A": "0"})
    assert code == EXIT_OK
    summary = load_json(out, "kerr-certificate")
    assert summary["identically_zero"] is True
    assert all(row["fitted_order"] is None for row in summary["components"])


def test_vanishing_orders(tmp_path):
    out = str(tmp_path / "o")
    code, _ = run(["vanishing-orders", "--out", out], env={})
    assert code == EXIT_OK
    fits = load_json(out, "vanishing-orders")["fits"]
    assert [f["predicted_order"] for f in fits] == [1, 2, 3, 4]
    assert all(abs(f["fitted_order"] - f["predicted_order"]) <= 0.1 for f in fits)


@pytest.mark.parametrize("family", ["Minkowski", "Schwarzschild"])
def test_pseudoconvexity_command(tmp_path, family):
    path = write_config(tmp_path, f"[background]\nfamily = {family}\npicture = inverted\n")
    out = str(tmp_path / "o")
    code, result = run(["pseudoconvexity", "--config", path, "--out", out], env={})
    assert code == EXIT_OK
    assert result.summary["closed_form_rel_error"] <= 1e-8
    assert result.summary["h"] == "model"


def test_grid_flag(tmp_path):
    out = str(tmp_path / "o")
    code, result = run(["pseudoconvexity", "--grid", "f=1e-3:1e-2:2,sigma=0:0:1", "--out", out], env={})
    assert code == EXIT_OK and result.summary["points"] == 2 * 1 * 3 * 1


@pytest.mark.slow
def test_carleman_command(tmp_path):
    out = str(tmp_path / "o")
    code, result = run(["carleman", "--out", out], env={})
    assert code == EXIT_OK
    summary = load_json(out, "carleman")
    assert summary["verdict"] == "pass"
    assert abs(summary["exponents"]["rhs_zero"] - 3) <= 0.1


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "carlemanlab.cli", "vanishing-orders", "--out", str(tmp_path / "o")],
        capture_output=True, text=True, env={**os.environ, "CARLEMANLAB_VANISHING_ORDERS": "0,1"},
    )
    assert proc.returncode == 0
    assert "vanishing-orders: PASS" in proc.stdout
