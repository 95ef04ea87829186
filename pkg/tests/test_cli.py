import csv
import json
import xml.etree.ElementTree as ET

import pytest

from parapet.cli import EVAL_HEADER, config_digest, main

ROW1 = ["--strength", "0.0077", "--height-ft", "0.36", "--roll-deg", "5", "--pitch-deg", "22", "--yaw-deg", "-23"]


@pytest.fixture(scope="module")
def prior_config(tmp_path_factory):
    d = tmp_path_factory.mktemp("cal")
    assert main(["calibrate", "--runs", "45", "--out", str(d / "cal")]) == 0
    cfg = {"protection": {"prior_file": str(d / "cal" / "prior.json")}}
    path = d / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh, quoting=csv.QUOTE_NONNUMERIC))


def test_calibrate_outputs_and_determinism(tmp_path):
    assert main(["calibrate", "--runs", "45", "--out", str(tmp_path / "a")]) == 0
    assert main(["calibrate", "--runs", "45", "--out", str(tmp_path / "b")]) == 0
    prior = json.loads((tmp_path / "a" / "prior.json").read_text())
    assert prior["alpha"] > 0 and prior["beta"] > 0
    assert (tmp_path / "a" / "prior.json").read_bytes() == (tmp_path / "b" / "prior.json").read_bytes()
    assert (tmp_path / "a" / "agreement.csv").read_bytes() == (tmp_path / "b" / "agreement.csv").read_bytes()
    rows = read_csv(tmp_path / "a" / "agreement.csv")
    assert rows[0] == ["run_id", "window_index", "agreement_rate"]
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["subcommand"] == "calibrate" and m["seed"] == 0 and "config_digest" in m


def test_calibrate_needs_two_runs(tmp_path):
    assert main(["calibrate", "--runs", "1", "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("row", [
    ROW1,
    ["--strength", "0.0100", "--height-ft", "-0.48", "--roll-deg", "-12", "--pitch-deg", "-3", "--yaw-deg", "-23"],
    ["--strength", "0.0050", "--height-ft", "-0.05", "--roll-deg", "22", "--pitch-deg", "-22", "--yaw-deg", "5"],
])
def test_score_reference_rows(prior_config, capsys, row):
    assert main(["score", "--config", str(prior_config), *row]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["f"] == pytest.approx(1 - out["effectiveness"])
    assert sum(out["tier_counts"].values()) == 20 and len(out["verdicts"]) == 20


def test_score_out_of_bounds_names_dimension(capsys):
    assert main(["score", "--protection", "trivial", "--strength", "0.005", "--yaw-deg", "90"]) == 2
    assert "yaw_deg" in capsys.readouterr().err


def test_bad_configs_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["score", "--config", str(bad), "--strength", "0.005"]) == 2
    bad.write_text(json.dumps({"weather": {}}))
    assert main(["score", "--config", str(bad), "--strength", "0.005"]) == 2
    bad.write_text(json.dumps({"scenario": {"t_max": 10}}))
    assert main(["score", "--config", str(bad), "--strength", "0.005", "--protection", "trivial"]) == 2
    bad.write_text(json.dumps({"objective": {"epsilon": 3}}))
    assert main(["score", "--config", str(bad), "--strength", "0.005", "--protection", "trivial"]) == 2
    assert main(["score", "--config", str(tmp_path / "missing.json"), "--strength", "0.005"]) == 2
    assert main(["bogus"]) == 2


def test_falsify_smoke_and_rerun(prior_config, tmp_path):
    args = ["falsify", "--config", str(prior_config), "--bootstrap", "10", "--iterations", "15", "--seed", "4"]
    rc = main([*args, "--out", str(tmp_path / "a")])
    assert rc in (0, 10)
    for name in ("evaluations.csv", "counterexamples.json", "attempts.json", "manifest.json"):
        assert (tmp_path / "a" / name).exists()
    rows = read_csv(tmp_path / "a" / "evaluations.csv")
    assert rows[0] == EVAL_HEADER
    assert 1 <= len(rows) - 1 <= 25
    assert main([*args, "--out", str(tmp_path / "b")]) == rc
    assert (tmp_path / "a" / "evaluations.csv").read_bytes() == (tmp_path / "b" / "evaluations.csv").read_bytes()
    attempts = json.loads((tmp_path / "a" / "attempts.json").read_text())
    assert attempts["estimate"]["expected_attempts"] >= 1


def test_falsify_trivial_wide_susceptibility_exits_10(tmp_path):
    from parapet.perception import DEFAULT_DETECTORS

    dets = [{"id": d.id, "range_midpoint_m": d.range_midpoint_m, "range_slope": d.range_slope,
             "attack_susceptibility": 1.0} for d in DEFAULT_DETECTORS]
    cfg = tmp_path / "wide.json"
    cfg.write_text(json.dumps({"perception": {"detectors": dets}}))
    rc = main(["falsify", "--config", str(cfg), "--protection", "trivial", "--out", str(tmp_path / "o")])
    assert rc == 10
    ce = json.loads((tmp_path / "o" / "counterexamples.json").read_text())
    assert len(ce) >= 1 and ce[0]["counterexample_fraction"] > 0.8


def test_compare_low_sample(prior_config, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(prior_config), "--points", "10", "--out", str(out)]) == 0
    rows = read_csv(out / "comparison.csv")
    assert len(rows) == 11
    assert json.loads((out / "manifest.json").read_text())["low_sample"] is True
    svg = ET.parse(out / "comparison.svg").getroot()
    assert svg.get("width") == "800" and svg.get("height") == "600"
    text = (out / "comparison.svg").read_text()
    assert "distance" in text and "score" in text
    assert main(["compare", "--config", str(prior_config), "--points", "10", "--out", str(tmp_path / "again")]) == 0
    assert (out / "comparison.csv").read_bytes() == (tmp_path / "again" / "comparison.csv").read_bytes()


def test_compare_needs_ten_points(tmp_path):
    assert main(["compare", "--points", "9", "--out", str(tmp_path)]) == 2


def test_digest_ignores_key_order():
    a = {"scenario": {"t_max": 200, "timestep_s": 0.1}, "objective": {"reps": 20}}
    b = {"objective": {"reps": 20}, "scenario": {"timestep_s": 0.1, "t_max": 200}}
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest({"scenario": {"t_max": 201}})


def test_inline_prior(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"protection": {"prior": {"alpha": 10.0, "beta": 1.0}, "sustain_windows": 3}}))
    assert main(["score", "--config", str(cfg), "--strength", "0.004", "--seed", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["protection"] == "fusion"
