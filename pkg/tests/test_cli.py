import json
import subprocess
import sys

import pytest
import yaml

from mepp_lab.cli import run
from mepp_lab.config import validate

SMALL_FLOW = {"grid_size": 8, "nu": 0.05, "dt": 0.02, "t_end": 0.4, "n_samples": 4}


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def report(out):
    return json.loads((out / "report.json").read_text())


def errors(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_default_select_passes(tmp_path):
    out = tmp_path / "sel"
    assert run(["select", "--out", str(out)]) == 0
    rep = report(out)
    assert rep["result"]["verdict"] == "pass" and rep["result"]["winner"] == "uniform"
    for name in ("series.csv", "trajectory.csv", "selection.txt"):
        assert (out / name).exists()
    assert "winner: uniform" in (out / "selection.txt").read_text()
    assert rep["estimator"] == "uniform-sampling" and rep["seed"] == 0
    assert len(rep["config_hash"]) == 64


def test_verify_prop5_box(tmp_path):
    out = tmp_path / "v"
    assert run(["verify", "props", "--prop", "5", "--box", "2", "--out", str(out)]) == 0
    suite = report(out)["result"]["suites"][0]
    assert suite["passed"]
    assert suite["final_partial_sum"].startswith("7.38905609")
    assert suite["exp_box"].startswith("7.38905609893")


def test_missing_seed(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", {"dim": 3, "energy": 0.5, "family": {"family": "uniform"}})
    assert run(["entropy", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    diag = errors(capsys)
    assert diag["error"] == "ConfigError"
    assert [i["field"] for i in diag["issues"]] == ["seed"]


def test_unknown_key_and_variable_viscosity(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", {"seed": 1, "flow": {**SMALL_FLOW, "nu": [0.1, 0.2]},
                                     "families": [{"family": "uniform"}], "colour": "red"})
    assert run(["select", "--config", cfg]) == 2
    fields = {i["field"] for i in errors(capsys)["issues"]}
    assert fields == {"flow.nu", "colour"}


def test_family_validation(capsys, tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 1, "dim": 3, "energy": 0.5, "family": {"family": "vmf"}})
    assert run(["entropy", "--config", cfg]) == 2
    assert "kappa" in errors(capsys)["issues"][0]["message"]


def test_mixture_component_validation(capsys, tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 1, "dim": 3, "energy": 0.5, "family": {
        "family": "mixture", "components": [{"family": "vmf", "kappa": 1}, {"family": "tabulated"}]}})
    assert run(["entropy", "--config", cfg]) == 2
    assert errors(capsys)["issues"][0]["field"] == "family"


def test_missing_config_file(capsys, tmp_path):
    assert run(["flow", "--config", str(tmp_path / "nope.yaml")]) == 2
    assert "not found" in errors(capsys)["message"]


def test_bad_threads(capsys):
    assert run(["flow", "--threads", "0"]) == 2


def test_byte_identical_reports(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 3, "count": 2000, "flow": SMALL_FLOW,
                                     "families": [{"family": "uniform"}, {"family": "vmf", "kappa": 2.0}]})
    a, b = tmp_path / "a", tmp_path / "b"
    run(["select", "--config", cfg, "--threads", "2", "--out", str(a)])
    run(["select", "--config", cfg, "--threads", "2", "--out", str(b)])
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "series.csv").read_bytes() == (b / "series.csv").read_bytes()
    c = tmp_path / "c"
    run(["select", "--config", cfg, "--threads", "1", "--out", str(c)])
    assert report(a)["config_hash"] != report(c)["config_hash"]


def test_seed_override(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 3, "flow": SMALL_FLOW})
    run(["flow", "--config", cfg, "--seed", "9", "--out", str(tmp_path / "o")])
    rep = report(tmp_path / "o")
    assert rep["seed"] == 9 and rep["config"]["seed"] == 9


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("MEPP_LAB_OUT", str(tmp_path / "env"))
    cfg = write(tmp_path, "c.yaml", {"seed": 0, "flow": SMALL_FLOW})
    assert run(["flow", "--config", cfg]) == 0
    assert (tmp_path / "env" / "trajectory.csv").exists()


def test_inconclusive_exit(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 0, "count": 2000, "flow": SMALL_FLOW, "families": [
        {"family": "uniform"}, {"family": "uniform", "name": "uniform-duplicate", "physical": False}]})
    assert run(["select", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert report(tmp_path / "o")["result"]["verdict"] == "inconclusive"


def test_fail_exit(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 0, "count": 2000, "flow": SMALL_FLOW, "families": [
        {"family": "vmf", "name": "peaked", "kappa": 5.0, "physical": True},
        {"family": "uniform", "name": "flat", "physical": False}]})
    assert run(["select", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_flow_dump_and_csv_preset(tmp_path):
    out = tmp_path / "f"
    cfg = write(tmp_path, "c.yaml", {"seed": 0, "flow": SMALL_FLOW, "dump_coefficients": True})
    assert run(["flow", "--config", cfg, "--out", str(out)]) == 0
    dumps = sorted(out.glob("coefficients_*.csv"))
    assert len(dumps) == 4
    rep = report(out)["result"]
    assert rep["divergence_residual"] <= 1e-12
    assert rep["metadata"]["integrator"] == "rk4"
    cfg2 = write(tmp_path, "c2.yaml", {"seed": 0, "flow": {**SMALL_FLOW, "preset": "csv",
                                                           "coefficients_csv": str(dumps[0])}})
    out2 = tmp_path / "f2"
    assert run(["flow", "--config", cfg2, "--out", str(out2)]) == 0
    # reading re-projects the coefficients, which may move the last bit
    again = report(out2)["result"]["trajectory"]
    assert [r["energy"] for r in again] == pytest.approx([r["energy"] for r in rep["trajectory"]], rel=1e-12)


def test_entropy_command(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 0, "dim": 3, "energy": 0.5, "count": 20000,
                                     "family": {"family": "vmf", "kappa": 1.0}})
    assert run(["entropy", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    res = report(tmp_path / "a")["result"]
    assert abs(res["gap"]["value"] - 0.15159592) <= 3 * res["gap"]["std_error"]
    cfg = write(tmp_path, "d.yaml", {"seed": 0, "dim": 3, "energy": 0.5, "count": 20000, "mass": 3.0,
                                     "family": {"family": "uniform"}})
    assert run(["entropy", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert report(tmp_path / "b")["result"]["entropy"]["value"] == pytest.approx(2.5310242469692907)


def test_restrict_command(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 0, "dims": [2, 3], "count": 20000, "functionals": ["one", "x1_sq"]})
    out = tmp_path / "r"
    assert run(["restrict", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "restrict.csv").read_text().splitlines()
    assert lines[0].startswith("dim,functional") and len(lines) == 5


def test_shipped_configs_validate():
    from mepp_lab.config import load_raw

    for cmd in ("verify", "entropy", "restrict", "flow", "select"):
        validate(cmd, load_raw(None, cmd))


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "mepp_lab.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "mepp-lab" in out.stdout
