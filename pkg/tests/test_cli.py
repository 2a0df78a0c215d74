import json
import shutil
from pathlib import Path

import pytest

from netreport import io as nio
from netreport.cli import main
from netreport.estimators import FrameMargins
from netreport.survey import census_design, full_enumeration, run_survey

from conftest import six_node

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(autouse=True)
def fixed_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def run(*argv):
    return main([str(a) for a in argv])


def read_json(path):
    return json.loads(Path(path).read_text())


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


@pytest.fixture
def census_files(tmp_path):
    pop = six_node()
    data = run_survey(pop, census_design(pop), full_enumeration(pop), seed=0)
    rec, mar = tmp_path / "census.csv", tmp_path / "census_margins.csv"
    nio.save_respondents(data, rec)
    nio.save_margins(FrameMargins({"all": 2}), mar)
    return rec, mar


@pytest.fixture
def simulated(tmp_path):
    assert run("simulate", "--seed", 5, "--out", tmp_path, "--quiet") == 0
    return tmp_path / "simulate-s5"


def test_simulate_outputs_and_truth(simulated):
    names = sorted(p.name for p in simulated.iterdir())
    assert names == [
        "margins.csv", "population_edges.csv", "population_nodes.csv", "respondents.csv",
        "truth.json", "truth.json.meta.json",
    ]
    truth = read_json(simulated / "truth.json")
    pop = nio.load_population(simulated / "population")
    assert truth["n_hidden"] == pop.n_hidden == 2000
    assert truth["n_frame"] == 400
    assert abs(truth["dbar_FF"] / 3.99 - 1) < 0.15
    assert truth["eta_H"] == truth["eta_F"] == 1


def test_simulate_is_reproducible(tmp_path):
    for out in ("a", "b"):
        assert run("simulate", "--seed", 11, "--n-hidden", 500, "--n-frame", 100, "--p", 0.05,
                   "--sample-size", 50, "--out", tmp_path / out, "--quiet") == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_census_estimate_is_exact_with_zero_width(census_files, tmp_path):
    rec, mar = census_files
    assert run("estimate", "--records", rec, "--margins", mar, "--out", tmp_path, "--format", "json",
               "--replicates", 200, "--quiet") == 0
    rows = read_json(tmp_path / "estimate-s0" / "estimate.json")
    assert [r["estimator"] for r in rows] == ["basic", "generalized"]
    for r in rows:
        assert r["point"] == 5 and r["ci_low"] == 5 and r["ci_high"] == 5
    summary = read_json(tmp_path / "estimate-s0" / "degree_summary.json")
    assert summary[0]["mean_degree"] == 3 and summary[0]["ci_low"] == 3


def test_simulate_then_estimate_recovers_census_truth(tmp_path):
    assert run("simulate", "--census", "--n-hidden", 300, "--n-frame", 120, "--p", 0.05, "--seed", 2,
               "--out", tmp_path, "--quiet") == 0
    sim = tmp_path / "simulate-s2"
    assert run("estimate", "--records", sim / "respondents.csv", "--margins", sim / "margins.csv",
               "--replicates", 50, "--out", tmp_path, "--quiet") == 0
    est = nio.read_result_rows(tmp_path / "estimate-s0" / "estimate.csv")[0]
    truth = read_json(sim / "truth.json")
    assert est["point"] == pytest.approx(truth["predicted_estimand"], rel=1e-12)
    assert est["ci_low"] == pytest.approx(est["ci_high"])


def test_estimate_identical_across_job_counts(simulated, tmp_path):
    args = ["estimate", "--records", simulated / "respondents.csv", "--margins", simulated / "margins.csv",
            "--seed", 3, "--quiet", "--save-replicate-weights"]
    assert run(*args, "--out", tmp_path / "j1", "--jobs", 1) == 0
    assert run(*args, "--out", tmp_path / "j4", "--jobs", 4) == 0
    a, b = tree_bytes(tmp_path / "j1"), tree_bytes(tmp_path / "j4")
    # parameters in the metadata record the job count; results must match byte for byte
    for name in a:
        if not name.endswith(".meta.json"):
            assert a[name] == b[name], name


def test_awareness_adds_distinct_generalized_estimate(tmp_path):
    assert run("simulate", "--awareness", 0.5, "--seed", 1, "--out", tmp_path, "--quiet") == 0
    sim = tmp_path / "simulate-s1"
    assert run("estimate", "--records", sim / "respondents.csv", "--margins", sim / "margins.csv",
               "--replicates", 100, "--out", tmp_path, "--quiet") == 0
    basic, gen = nio.read_result_rows(tmp_path / "estimate-s0" / "estimate.csv")
    assert gen["point"] > 1.5 * basic["point"]


def test_validate_clean_and_weight_report(census_files, tmp_path, simulated):
    rec, mar = census_files
    assert run("validate", "--records", rec, "--margins", mar, "--out", tmp_path, "--quiet") == 0
    assert run("validate", "--records", simulated / "respondents.csv", "--margins", simulated / "margins.csv",
               "--out", tmp_path, "--run-id", "v2", "--quiet") == 0
    rows = nio.read_result_rows(tmp_path / "v2" / "validate.csv")
    for r in rows:
        assert r["k"] == pytest.approx(r["margin"] / r["design_weight_sum"])
        assert r["calibrated_weight_sum"] == pytest.approx(r["margin"])


def test_validate_reports_bad_row(tmp_path, capsys):
    head = ",".join(nio.respondent_header(3))
    rec = tmp_path / "bad.csv"
    rec.write_text(head + "\nok,all,1,1,1,0,0,all,1" + "," * 8 + "\nbad,all,1,1,2,0,0,all,1,0,0,all,1,,,,\n")
    mar = tmp_path / "m.csv"
    mar.write_text("group,count\nall,2\n")
    assert run("validate", "--records", rec, "--margins", mar, "--out", tmp_path) == 1
    assert "row 3" in capsys.readouterr().err


def test_ic_and_tae(simulated, tmp_path):
    rec, mar = simulated / "respondents.csv", simulated / "margins.csv"
    assert run("ic", "--records", rec, "--margins", mar, "--replicates", 200, "--out", tmp_path, "--quiet") == 0
    text = (tmp_path / "ic-s0" / "ic.csv").read_text().splitlines()
    assert text[0] == "group,delta,delta_raw,k,ci_low,ci_high,n_respondents_in,n_respondents_out"
    assert len(text) == 13
    assert run("tae", "--cc-records", rec, "--meal-records", rec, "--margins", mar, "--replicates", 100,
               "--out", tmp_path, "--quiet") == 0
    rows = nio.read_result_rows(tmp_path / "tae-s0" / "tae.csv")
    assert rows[0]["group"] == "TAE" and rows[0]["contribution"] == 0


def test_sensitivity_sweep(tmp_path):
    assert run("sensitivity-sweep", "--sigmas", "1", "--p-f-given-h", "0.5", "--n-hidden", 1000,
               "--seeds", 10, "--out", tmp_path, "--quiet") == 0
    rows = nio.read_result_rows(tmp_path / "sensitivity-sweep-s0" / "sweep.csv")
    assert list(rows[0]) == ["sigma", "p_f_given_h", "nu_measured", "nu_predicted", "eta_f", "eta_h",
                             "nh_hat_mean", "nh_true"]
    assert rows[0]["nu_measured"] == pytest.approx(1.0, abs=0.05)
    assert run("sensitivity-sweep", "--seeds", 10**7, "--out", tmp_path, "--quiet") == 2


def test_usage_errors(tmp_path, capsys):
    assert run("estimate", "--out", tmp_path) == 2
    assert "--records" in capsys.readouterr().err
    assert run("frobnicate") == 2
    assert run("simulate", "--n-frame", 5000, "--out", tmp_path, "--quiet") == 2


def test_config_file(simulated, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"records = {simulated / 'respondents.csv'}\nmargins = {simulated / 'margins.csv'}\nreplicates = 50\n")
    assert run("estimate", "--config", cfg, "--out", tmp_path, "--quiet") == 0
    meta = read_json(tmp_path / "estimate-s0" / "estimate.csv.meta.json")
    assert meta["parameters"]["replicates"] == 50
    assert len(meta["input_digests"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert run("estimate", "--config", bad, "--out", tmp_path, "--quiet") == 2
    missing = tmp_path / "missing.cfg"
    missing.write_text("records = nope.csv\n")
    assert run("estimate", "--config", missing, "--out", tmp_path, "--quiet") == 2


def _golden_pipeline(out):
    assert run("simulate", "--seed", 7, "--n-hidden", 400, "--n-frame", 120, "--p", 0.04, "--sample-size", 60,
               "--awareness", 0.8, "--out", out, "--run-id", "sim", "--quiet") == 0
    sim = out / "sim"
    common = ["--seed", 7, "--replicates", 100, "--out", out, "--quiet"]
    assert run("estimate", "--records", sim / "respondents.csv", "--margins", sim / "margins.csv",
               "--run-id", "est", *common) == 0
    assert run("ic", "--records", sim / "respondents.csv", "--margins", sim / "margins.csv",
               "--run-id", "ic", *common) == 0
    assert run("sensitivity-sweep", "--sigmas", "0.5", "--p-f-given-h", "0.5", "--n-hidden", 400,
               "--seeds", 3, "--seed", 7, "--out", out, "--run-id", "sweep", "--quiet") == 0


GOLDEN_FILES = [
    "sim/respondents.csv", "sim/margins.csv", "sim/truth.json",
    "est/estimate.csv", "est/degree_summary.csv", "ic/ic.csv", "sweep/sweep.csv",
]


@pytest.mark.parametrize("name", GOLDEN_FILES)
def test_golden_files(tmp_path, name):
    _golden_pipeline(tmp_path)
    assert (tmp_path / name).read_bytes() == (GOLDEN / name).read_bytes()


def test_pipeline_reruns_are_byte_identical(tmp_path):
    out = tmp_path / "run"
    _golden_pipeline(out)
    first = tree_bytes(out)
    shutil.rmtree(out)
    _golden_pipeline(out)
    assert tree_bytes(out) == first
    assert any(name.endswith(".meta.json") for name in first)
