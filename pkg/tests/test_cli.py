import csv

import numpy as np
import pytest

from inflap.cli import EXIT_CONFIG, env_overrides, main, resolve_config
from inflap.io import read_field


def run(tmp_path, *args, env=None, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)], environ=env or {})
    return code, out


def test_oracle_check_passes(tmp_path):
    code, out = run(tmp_path, "oracle-check")
    assert code == 0
    with open(out / "oracle_check.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][-1] == "rel_error"
    assert all(float(r[-1]) <= 1e-2 for r in rows[1:])


def test_eigen_bracket_contains_quarter_pi_squared(tmp_path):
    code, out = run(tmp_path, "eigen")
    assert code == 0
    import json

    meta = json.loads((out / "eigenfunction.csv.json").read_text())
    assert meta["lambda_lo"] <= np.pi**2 / 4 <= meta["lambda_hi"]
    assert meta["hopf_nu"] > 0
    _, phi = read_field(out / "eigenfunction.csv")
    assert phi.max() == pytest.approx(1.0) and phi.min() >= 0 and np.count_nonzero(phi > 0) == len(phi) - 2


def test_kpp_reaches_one(tmp_path):
    code, out = run(tmp_path, "kpp")
    assert code == 0
    xy, u = read_field(out / "field.csv")
    assert u[np.argmin(np.abs(xy[:, 0]))] >= 0.95


def test_solve_and_liouville_outputs(tmp_path):
    assert run(tmp_path, "solve", name="s")[0] == 0
    code, out = run(tmp_path, "liouville", name="l")
    assert code == 0 and (out / "theta.csv").exists()


def test_env_override_parsing():
    env = {"INFLAP_OPERATOR__GAMMA": "1.5", "INFLAP_DOMAIN__H": "0.02", "OTHER": "x"}
    assert env_overrides(env) == {"operator": {"gamma": 1.5}, "domain": {"h": 0.02}}
    cfg = resolve_config("eigen", None, env)
    assert cfg["operator"]["gamma"] == 1.5 and cfg["domain"]["h"] == 0.02


def test_bad_gamma_is_config_error(tmp_path):
    code, _ = run(tmp_path, "eigen", env={"INFLAP_OPERATOR__GAMMA": "3"})
    assert code == EXIT_CONFIG


def test_unknown_key_is_config_error(tmp_path):
    code, _ = run(tmp_path, "solve", env={"INFLAP_SOLVER__BOGUS": "1"})
    assert code == EXIT_CONFIG


def test_yaml_config(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("operator:\n  gamma: 1.0\ndomain:\n  h: 0.02\n")
    code, out = run(tmp_path, "solve", "--config", str(cfg))
    assert code == 0


def test_bad_workers(tmp_path):
    assert run(tmp_path, "solve", "--workers", "0")[0] == EXIT_CONFIG


@pytest.mark.parametrize("command,files", [("oracle-check", ["oracle_check.csv"]), ("liouville", ["theta.csv"])])
def test_workers_do_not_change_output(tmp_path, command, files):
    _, a = run(tmp_path, command, "--workers", "1", name="a")
    _, b = run(tmp_path, command, "--workers", "4", name="b")
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()
