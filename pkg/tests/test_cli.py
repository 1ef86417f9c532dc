"""Scenario parsing, report generation, CSV export, and exit codes."""

import json
import math
import os

import pytest

from rfloc.cli import _validate, main, parse_scenario, report_to_csv, run
from rfloc.errors import ParseError, ValidationError

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "scenarios")
BASELINE = os.path.join(SCENARIO_DIR, "trilat3d_baseline.json")
NOISE_SWEEP = os.path.join(SCENARIO_DIR, "tdoa2d_noise_sweep.json")
PIPELINE = os.path.join(SCENARIO_DIR, "pipeline_demo.json")
DOPPLER = os.path.join(SCENARIO_DIR, "doppler_demo.json")


def _baseline_raw():
    with open(BASELINE) as fh:
        return json.load(fh)


def test_parse_baseline():
    sf = parse_scenario(BASELINE)
    assert sf.mode == "trilat3d"
    assert [e.coords for e in sf.emitters] == [(0.0, 0.0, 0.0), (500.0, 0.0, 0.0),
                                               (0.0, 500.0, 0.0)]
    assert sf.distances == (300.0, 400.0, 500.0)


def test_parse_empty_file(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    with pytest.raises(ParseError):
        parse_scenario(str(path))


def test_parse_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema_version": 1,,}')
    with pytest.raises(ParseError) as exc:
        parse_scenario(str(path))
    assert "line" in str(exc.value)


def test_parse_missing_file():
    with pytest.raises(ParseError):
        parse_scenario("/nonexistent/scenario.json")


def test_unknown_field_rejected():
    raw = _baseline_raw()
    raw["surprise"] = 1
    with pytest.raises(ValidationError):
        _validate(raw)
    raw = _baseline_raw()
    raw["scenario"]["velocity"] = 3.0
    with pytest.raises(ValidationError) as exc:
        _validate(raw)
    assert exc.value.field == "velocity"


def test_schema_version_enforced():
    raw = _baseline_raw()
    raw["schema_version"] = 2
    with pytest.raises(ValidationError) as exc:
        _validate(raw)
    assert exc.value.field == "schema_version"


def test_negative_noise_rejected():
    raw = _baseline_raw()
    raw["scenario"]["noise_sigma_t"] = -1e-9
    with pytest.raises(ValidationError) as exc:
        _validate(raw)
    assert exc.value.field == "noise_sigma_t"


def test_trilat_needs_exactly_one_range_source():
    raw = _baseline_raw()
    raw["scenario"]["receivers"] = [[180, 90, 222.486]]
    with pytest.raises(ValidationError):
        _validate(raw)  # both distances and receivers
    raw = _baseline_raw()
    del raw["scenario"]["distances"]
    with pytest.raises(ValidationError):
        _validate(raw)  # neither


def test_tdoa_rejects_distances():
    raw = {
        "schema_version": 1,
        "scenario": {"emitters": [[400, 300]], "receivers": [[0, 0], [1000, 0], [0, 1000]],
                     "distances": [1.0]},
        "solve": {"mode": "tdoa2d"},
    }
    with pytest.raises(ValidationError):
        _validate(raw)


def test_mode_dimension_must_match():
    raw = _baseline_raw()
    raw["solve"]["mode"] = "trilat2d"
    with pytest.raises(ValidationError):
        _validate(raw)


def test_doppler_requires_block():
    raw = {
        "schema_version": 1,
        "scenario": {"emitters": [], "receivers": []},
        "solve": {"mode": "doppler"},
    }
    with pytest.raises(ValidationError):
        _validate(raw)


def test_run_baseline_reference_values():
    report = run(parse_scenario(BASELINE))
    assert report["errors"] == []
    entry = report["solves"][0]
    x, y, z = entry["estimate"]
    assert (x, y) == pytest.approx((180.0, 90.0), abs=1e-9)
    assert z == pytest.approx(math.sqrt(49500.0), abs=1e-6)
    assert entry["residual_norm"] < 1e-6
    assert "mirror_ambiguity" in entry["flags"]


def test_run_doppler():
    report = run(parse_scenario(DOPPLER))
    entry = report["solves"][0]
    assert entry["shift_hz"] == 100.0
    assert entry["distance_m"] == 15.0
    assert entry["idealized"] is True


def test_report_deterministic_apart_from_timestamp():
    sf = parse_scenario(NOISE_SWEEP)
    a = run(sf)
    b = run(sf)
    a.pop("timestamp")
    b.pop("timestamp")
    assert json.dumps(a) == json.dumps(b)


def test_report_roundtrip_fixed_point():
    report = run(parse_scenario(BASELINE))
    text = json.dumps(report, indent=2)
    assert json.loads(text) == report
    assert json.dumps(json.loads(text), indent=2) == text


def test_pipeline_noise_free_team_error():
    report = run(parse_scenario(PIPELINE))
    assert report["errors"] == []
    team = [e for e in report["solves"] if e["kind"] == "team_position"]
    assert len(team) == 1
    assert team[0]["error_m"] < 1e-3


def test_monte_carlo_medians_increase_with_noise():
    report = run(parse_scenario(NOISE_SWEEP))
    summaries = report["monte_carlo"]["summaries"]
    assert [s["sigma_t"] for s in summaries] == [0.0, 1e-7]
    assert summaries[0]["n"] == 200 and summaries[1]["n"] == 200
    assert summaries[1]["median_error_m"] > summaries[0]["median_error_m"]


def test_monte_carlo_rows_and_csv():
    report = run(parse_scenario(NOISE_SWEEP))
    rows = report["monte_carlo"]["rows"]
    assert len(rows) == 400
    assert rows[0]["trial"] == 0 and rows[199]["trial"] == 199
    csv_text = report_to_csv(report)
    lines = csv_text.strip().split("\n")
    assert lines[0] == "trial,sigma_t,mode,x,y,z,residual_norm,converged"
    assert len(lines) == 401
    assert lines[1].split(",")[2] == "tdoa2d"
    assert lines[1].split(",")[-1] in ("true", "false")


def test_csv_single_solve():
    report = run(parse_scenario(BASELINE))
    lines = report_to_csv(report).strip().split("\n")
    assert len(lines) == 2
    fields = lines[1].split(",")
    assert fields[0] == "0" and fields[2] == "trilat3d"


def test_seed_override_changes_report():
    sf = parse_scenario(NOISE_SWEEP)
    assert run(sf, seed=999)["seed"] == 999
    assert run(sf)["seed"] == 2024


def test_monte_carlo_validation():
    raw = _baseline_raw()
    raw["monte_carlo"] = {"trials": 10, "sigma_t_list": [0.0]}
    with pytest.raises(ValidationError):
        _validate(raw)  # explicit-distance trilat cannot be noise-swept


def test_main_validate_ok(capsys):
    assert main(["validate", BASELINE]) == 0
    assert "OK" in capsys.readouterr().out


def test_main_validate_bad_file(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{")
    assert main(["validate", str(path)]) == 2
    assert "input error" in capsys.readouterr().err


def test_main_run_writes_output(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["run", BASELINE, "--output", str(out), "--quiet"])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["mode"] == "trilat3d"
    assert capsys.readouterr().out == ""


def test_main_run_stdout(capsys):
    code = main(["run", DOPPLER, "--quiet"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["solves"][0]["distance_m"] == 15.0


def test_main_solve_error_exit_code(tmp_path, capsys):
    doc = {
        "schema_version": 1,
        "scenario": {"emitters": [[0, 0, 0], [1, 0, 0], [2, 0, 0]],
                     "distances": [1, 1, 1]},
        "solve": {"mode": "trilat3d"},
    }
    path = tmp_path / "collinear.json"
    path.write_text(json.dumps(doc))
    code = main(["run", str(path), "--quiet"])
    assert code == 1
    report = json.loads(capsys.readouterr().out)
    assert report["errors"][0]["type"] == "GeometryDegenerate"


def test_main_mode_override_revalidates(capsys):
    # baseline is 3D; forcing a 2D mode must fail validation (exit 2)
    assert main(["run", BASELINE, "--mode", "trilat2d", "--quiet"]) == 2
    assert "input error" in capsys.readouterr().err


def test_main_export_csv(tmp_path):
    out = tmp_path / "rows.csv"
    assert main(["export-csv", BASELINE, "--output", str(out), "--quiet"]) == 0
    assert out.read_text().startswith("trial,sigma_t,mode,")


def test_main_negative_seed_rejected(capsys):
    assert main(["run", BASELINE, "--seed", "-3", "--quiet"]) == 2
    assert "input error" in capsys.readouterr().err
