import csv
import json
import math
from importlib import resources

import numpy as np
import pytest

from levyou import cli
from levyou.config import DEFAULTS, bundled, bundled_names, loads, parse_config
from levyou.errors import ConfigurationError
from levyou.levy import Atoms, GaussianDensity, Stable, SumMeasure, UniformDensity


def data(name):
    return str(resources.files("levyou").joinpath(f"data/{name}.json"))


def write(tmp_path, doc, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


BASE = {"schema_version": 1, "dimension": 1, "A": [[-1.0]],
        "levy_measure": {"type": "atoms", "locations": [1.0], "masses": [1.0]}}


def with_measure(measure, **extra):
    return {**BASE, "levy_measure": measure, **extra}


# --- configuration ----------------------------------------------------------------

def test_bundled_examples_parse():
    assert set(bundled_names()) >= {"stable_cauchy", "gaussian_cp", "single_atom", "gaussian_ou"}
    for name in bundled_names():
        cfg = bundled(name)
        assert cfg.model.dim == 1 and cfg.defaults["seed"] == 0


def test_measure_types():
    assert isinstance(parse_config(BASE).model.triplet.nu, Atoms)
    nu = parse_config(with_measure({"type": "stable", "alpha": 1.5, "kappa": 2.0})).model.triplet.nu
    assert isinstance(nu, Stable) and nu.kappa == pytest.approx(2.0)
    nu = parse_config(with_measure({"type": "gaussian", "mass": 2.0, "cov": 0.5})).model.triplet.nu
    assert isinstance(nu, GaussianDensity) and nu.total_mass == pytest.approx(2.0)
    nu = parse_config(with_measure({"type": "sum", "parts": [
        {"type": "uniform", "low": -1.0, "high": 1.0},
        {"type": "atoms", "locations": [2.0], "masses": [0.5]}]})).model.triplet.nu
    assert isinstance(nu, SumMeasure) and isinstance(nu.parts[0], UniformDensity)


def test_defaults_merge():
    cfg = parse_config({**BASE, "defaults": {"n": 123}})
    assert cfg.defaults["n"] == 123 and cfg.defaults["rho"] == DEFAULTS["rho"]


@pytest.mark.parametrize("doc,field", [
    (with_measure({"type": "stable", "alpha": 2.5, "kappa": 1.0}), "levy_measure.alpha"),
    ({**BASE, "A": [[-1.0, 0.0]]}, "A"),
    ({**BASE, "schema_version": 7}, "schema_version"),
    (with_measure({"type": "atoms", "locations": [0.0], "masses": [1.0]}), "levy_measure.locations"),
    ({**BASE, "Q": [[-1.0]]}, "Q"),
])
def test_errors_name_the_field(doc, field):
    with pytest.raises(ConfigurationError) as err:
        parse_config(doc)
    assert err.value.field == field


def test_json_errors_report_position():
    with pytest.raises(ConfigurationError) as err:
        loads('{"schema_version": 1,\n  "dimension": }')
    assert "line 2" in str(err.value)


def test_point_broadcast():
    cfg = parse_config(BASE)
    np.testing.assert_array_equal(cfg.point(2.0), [2.0])
    with pytest.raises(ConfigurationError):
        cfg.point([1.0, 2.0])


# --- command line -------------------------------------------------------------------

def test_check_stable_bundled(tmp_path, capsys):
    out = tmp_path / "check.json"
    assert cli.main(["check", data("stable_cauchy"), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["kind"] == "condition-report"
    assert doc["report"]["classification"] == "exp-ergodic-alpha"
    assert doc["meta"]["seed"] == 0 and doc["meta"]["workers"] == 1


def test_check_require_sets_exit_code(tmp_path):
    out = str(tmp_path / "c.json")
    assert cli.main(["check", data("single_atom"), "--out", out]) == 0
    assert cli.main(["check", data("single_atom"), "--require", "ergodic", "--out", out]) == 2
    assert cli.main(["check", data("single_atom"), "--require", "invariant-measure-exists",
                     "--out", out]) == 0


def test_check_unstable_drift_gives_condition_exit(tmp_path):
    path = write(tmp_path, {**BASE, "A": [[0.5]]})
    assert cli.main(["check", path, "--out", str(tmp_path / "c.json")]) == 2


def test_tv_decay_same_point(tmp_path):
    prefix = str(tmp_path / "zero")
    code = cli.main(["tv-decay", data("gaussian_cp"), "--x", "0.5", "--y", "0.5",
                     "--t-grid", "1,2,3", "--out", prefix])
    assert code == 0
    rows = list(csv.DictReader(open(prefix + ".csv")))
    assert len(rows) == 3 and all(float(r["tv"]) == 0.0 for r in rows)
    fit = json.load(open(prefix + ".fit.json"))["fit"]
    assert "skipped" in fit


def test_tv_decay_oracle_fit(tmp_path):
    prefix = str(tmp_path / "g")
    assert cli.main(["tv-decay", data("gaussian_ou"), "--vs-invariant", "--t-grid",
                     "1,2,3,4,5,6", "--out", prefix]) == 0
    fit = json.load(open(prefix + ".fit.json"))["fit"]
    assert fit["family"] == "exponential" and fit["params"]["kappa"] > 0


def test_simulate_zero_noise(tmp_path):
    path = write(tmp_path, with_measure({"type": "zero"}))
    out = tmp_path / "sim.csv"
    assert cli.main(["simulate", path, "--x", "2", "--t", "1", "--n", "5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x0"
    assert len(set(lines[1:])) == 1 and float(lines[1]) == pytest.approx(2 * math.exp(-1), rel=1e-14)


def test_simulate_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"s{k}.csv"
        cli.main(["simulate", data("stable_cauchy"), "--t", "1", "--n", "40000", "--seed", "3",
                  "--workers", "2", "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_coupling_csv(tmp_path):
    out = tmp_path / "coup.csv"
    assert cli.main(["coupling", data("gaussian_cp"), "--x", "1", "--y", "0", "--t-grid", "1,2",
                     "--n", "5000", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert list(rows[0]) == ["t", "p_not_coupled", "p_not_coupled_se", "bound_rb", "bound_rb_se",
                             "p_no_jump", "p_no_jump_expected"]
    assert float(rows[0]["p_no_jump_expected"]) == pytest.approx(math.exp(-1))


def test_invariant_outputs(tmp_path):
    prefix = str(tmp_path / "inv")
    assert cli.main(["invariant", data("gaussian_ou"), "--n", "5000", "--out", prefix]) == 0
    ks = json.load(open(prefix + ".ks.json"))["ks"]
    assert ks["ks"] <= ks["critical_0.01"]
    assert len(open(prefix + ".csv").read().splitlines()) == 5001


def test_report_single_atom(tmp_path):
    assert cli.main(["report", data("single_atom"), "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["report"]["conditions"]["classification"] == "invariant-measure-exists"
    assert doc["report"]["skipped"]


def test_errors_exit_one(tmp_path, capsys):
    path = write(tmp_path, with_measure({"type": "stable", "alpha": 3.0, "kappa": 1.0}))
    assert cli.main(["check", path]) == 1
    err = capsys.readouterr().err
    assert err.startswith("levyou: error") and "levy_measure.alpha" in err
    assert cli.main(["check", str(tmp_path / "missing.json")]) == 1


def test_tv_decay_needs_a_target(tmp_path, capsys):
    assert cli.main(["tv-decay", data("gaussian_ou")]) == 1
    err = capsys.readouterr().err
    assert "--y" in err and "--vs-invariant" in err
    assert cli.main(["check", data("single_atom"), "--require", "bogus"]) == 1


def test_workers_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LEVYOU_WORKERS", "3")
    out = tmp_path / "c.json"
    cli.main(["check", data("single_atom"), "--out", str(out)])
    assert json.loads(out.read_text())["meta"]["workers"] == 3
