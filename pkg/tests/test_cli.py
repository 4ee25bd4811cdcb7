import csv
import json

import pytest

from mudichotomy import cli
from mudichotomy.config import DEFAULTS, normalize, validate
from mudichotomy.errors import ConfigError
from mudichotomy.runner import run, strip_provenance, to_jsonable

POLY_VERIFY = {
    "command": "dichotomy-verify",
    "inputs": {"system": {"name": "poly-example"}, "rate": {"kind": "polynomial"},
               "certificate": {"projector_kind": "zero", "K": 1, "beta": 1}},
}
CONST_SPECTRUM = {
    "command": "spectrum-estimate",
    "inputs": {"system": {"name": "constant", "parameters": {"c": -1}}, "rate": {"kind": "exponential"}},
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_validate_names_missing_field():
    bad = {"command": "dichotomy-verify", "inputs": {"system": {"name": "poly-example"},
                                                     "certificate": {"projector_kind": "zero", "K": 1}}}
    with pytest.raises(ConfigError) as exc:
        validate(bad)
    assert exc.value.path == "inputs.rate"


def test_validate_rejects_unknown_command_and_keys():
    with pytest.raises(ConfigError):
        validate({"command": "plot"})
    with pytest.raises(ConfigError) as exc:
        validate({"command": "paper-examples", "extra": 1})
    assert exc.value.path == "<root>"


def test_validate_K_below_one():
    cfg = json.loads(json.dumps(POLY_VERIFY))
    cfg["inputs"]["certificate"]["K"] = 0.5
    with pytest.raises(ConfigError) as exc:
        validate(cfg)
    assert exc.value.path == "inputs.certificate.K"


def test_normalize_materializes_defaults():
    cfg = normalize({"command": "paper-examples", "numerics": {"hull": {"cauchy_tol": 1e-7}}}, seed=3)
    n = cfg["numerics"]
    assert n["hull"]["cauchy_tol"] == 1e-7
    assert n["hull"]["compact_radius"] == DEFAULTS["hull"]["compact_radius"]
    assert n["seed"] == 3
    assert set(n) == set(DEFAULTS)


def test_normalize_unknown_numeric():
    with pytest.raises(ConfigError) as exc:
        normalize({"command": "paper-examples", "numerics": {"hull": {"bogus": 1}}})
    assert exc.value.path == "numerics.hull.bogus"


def test_to_jsonable_infinities():
    assert to_jsonable({"a": [float("inf"), -float("inf"), float("nan")]}) == {"a": ["+inf", "-inf", None]}


def test_run_verify_report_shape():
    report, _ = run(POLY_VERIFY)
    assert report["schema_version"] == "1"
    assert report["verdict"]["passed"]
    assert report["results"]["worst_margin"] == pytest.approx(0.0, abs=1e-9)
    assert report["config"]["numerics"]["closed_form_tol"] == 1e-9
    assert "elapsed_seconds" in report["provenance"]
    assert "elapsed_seconds" not in json.dumps(report["results"])


def test_run_spectrum_constant():
    report, tables = run(CONST_SPECTRUM)
    ivs = report["results"]["spectrum"]["intervals"]
    assert len(ivs) == 1
    assert ivs[0]["lo"] == pytest.approx(-1.0, abs=1e-2) and ivs[0]["hi"] == pytest.approx(-1.0, abs=1e-2)
    assert tables["spectrum_intervals.csv"][0][0] == "lower"


def test_determinism_same_seed():
    cfg = {"command": "dichotomy-verify", "inputs": {
        "system": {"name": "nue-example"}, "rate": {"kind": "exponential"},
        "certificate": {"projector_kind": "identity", "log_K": 0.4, "alpha": -0.8, "theta": 0.4}}}
    a, _ = run(cfg, seed=5)
    b, _ = run(cfg, seed=5)
    assert json.dumps(strip_provenance(a), sort_keys=True) == json.dumps(strip_provenance(b), sort_keys=True)
    c, _ = run(cfg, seed=6)
    assert c["results"]["worst_margin"] != a["results"]["worst_margin"] or c["results"]["pairs_checked"] != a["results"]["pairs_checked"]


def test_window_scale_applied():
    cfg = {"command": "rates-compare", "inputs": {"rate": {"kind": "exponential"}, "sigma": {"kind": "polynomial"},
                                                  "mode": "weak"}}
    report, _ = run(cfg, window_scale=0.5)
    assert report["results"]["weak"]["evidence"]["window"] == pytest.approx(0.5 * 4.0 * 2.0 ** 33)


def test_cli_pass_writes_report(tmp_path):
    out = tmp_path / "out"
    rc = cli.main(["--config", _write(tmp_path, POLY_VERIFY), "--out", str(out)])
    assert rc == 0
    assert json.loads((out / "report.json").read_text())["verdict"]["passed"]


def test_cli_failure_exit_code(tmp_path):
    cfg = {"command": "dichotomy-verify", "inputs": {
        "system": {"name": "nue-example"}, "rate": {"kind": "exponential"},
        "certificate": {"projector_kind": "identity", "K": 1, "alpha": -0.8, "theta": 0.4}}}
    assert cli.main(["--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 1


def test_cli_config_error_names_field(tmp_path, capsys):
    cfg = {"command": "spectrum-estimate", "inputs": {"system": {"name": "zero"}}}
    assert cli.main(["--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    assert "inputs.rate" in capsys.readouterr().err


def test_cli_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["--config", str(p)]) == 2


def test_cli_invalid_certificate_is_config_error(tmp_path):
    cfg = json.loads(json.dumps(POLY_VERIFY))
    cfg["inputs"]["certificate"] = {"projector_kind": "identity", "K": 1, "alpha": 0.5}
    assert cli.main(["--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 2


def test_cli_unsupported_capability(tmp_path):
    cfg = {"command": "spectrum-estimate", "inputs": {"system": {"name": "rotating-decay"},
                                                      "rate": {"kind": "exponential"}}}
    assert cli.main(["--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 3


def test_cli_csv_output(tmp_path):
    cfg = {"command": "system-evolve", "inputs": {"system": {"name": "abs", "parameters": {"scale": 2}},
                                                  "t": 3, "s": 1}}
    out = tmp_path / "o"
    assert cli.main(["--config", _write(tmp_path, cfg), "--out", str(out), "--format", "json+csv"]) == 0
    rows = list(csv.reader((out / "log_norm_grid.csv").open()))
    assert rows[0] == ["t", "s", "log_norm"]
    assert float(rows[-1][2]) == pytest.approx(8.0, abs=1e-12)
    report = json.loads((out / "report.json").read_text())
    assert report["results"]["log_norm"] == pytest.approx(8.0, abs=1e-12)


@pytest.mark.parametrize("cfg", [
    {"command": "rates-classify", "inputs": {"rate": {"kind": "superexponential", "parameters": {"r": 2}}}},
    {"command": "rates-limit-probe", "inputs": {"rate": {"kind": "subexponential", "parameters": {"r": 0.5}}, "t": 1}},
    {"command": "system-evolve", "inputs": {"system": {"name": "rotating-decay"}, "t": 2, "s": 0, "method": "rk4"}},
    {"command": "dichotomy-fit", "inputs": {"system": {"name": "poly-example"}, "rate": {"kind": "polynomial"},
                                            "projector_kind": "zero", "beta": 1}},
    {"command": "dichotomy-propagate", "inputs": {
        "system": {"name": "nue-example"}, "rate": {"kind": "exponential"}, "taus": [-5, 5],
        "certificate": {"projector_kind": "identity", "log_K": 0.4, "alpha": -0.8, "theta": 0.4}}},
    {"command": "growth-verify", "inputs": {"system": {"name": "quadratic-example"},
                                            "rate": {"kind": "superexponential", "parameters": {"r": 2}},
                                            "growth_certificate": {"L": 1, "a": 1}}},
    {"command": "hull-probe", "inputs": {"system": {"name": "poly-example"}}},
    {"command": "hull-classify", "inputs": {"system": {"name": "constant", "parameters": {"c": 1}},
                                            "query_rate": {"kind": "polynomial"}}},
])
def test_every_command_passes(cfg, tmp_path):
    assert cli.main(["--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 0


def test_cli_default_runs_example_battery(tmp_path):
    assert cli.main(["--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["command"] == "paper-examples"
    assert len(report["results"]["checks"]) >= 18


def test_cli_mutation_names_failing_check(tmp_path, capsys):
    cfg = {"command": "paper-examples", "inputs": {"mutation": "halved-K"}}
    assert cli.main(["--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 1
    assert "nue-dichotomy-verify" in capsys.readouterr().out


def test_config_echo_round_trips():
    report, _ = run(POLY_VERIFY, seed=2)
    again, _ = run(report["config"])
    assert again["config"] == report["config"]
    assert again["results"] == report["results"]


def test_example_battery_deterministic():
    cfg = {"command": "paper-examples"}
    a, _ = run(cfg)
    b, _ = run(cfg)
    assert a["results"] == b["results"]
    assert a["verdict"]["passed"]
