import json
import math
import os
import pathlib

import pytest

import warning_triage as wt

FIXTURES = pathlib.Path(__file__).resolve().parents[1] / "fixtures"


def test_hash_vectors():
    assert wt.fnv1a64_hex("") == "cbf29ce484222325"
    assert wt.fnv1a64_hex("a") == "af63dc4c8601ec8c"


def test_parse_report_and_features():
    text = (FIXTURES / "aarc_report.json").read_text()
    records = wt.parse_report(text)
    assert len(records) == 1
    assert records[0]["analyzer"] == "UnsafeDestructor"
    assert len(records[0]["id"]) == 16
    values = wt.extract_features(text, 0)
    assert len(values) == len(wt.feature_names()) == 87
    assert all(math.isfinite(v) for v in values)
    assert len(wt.manifest_digest()) == 16


def test_schema_errors_are_value_errors():
    with pytest.raises(wt.ValidationError):
        wt.parse_report('[{"level": "Warning"}]')
    with pytest.raises(ValueError):
        wt.parse_report("not json")


def test_reward_constants():
    assert wt.reward("fuzz", "tp") == -5
    assert wt.reward("classify_tp", "tp", "crash") == 25
    assert wt.reward("classify_fp", "fp", "clean") == 23
    assert wt.reward("classify_tp", "fp") == -15
    with pytest.raises(wt.EngineError):
        wt.reward("fuzz", "tp", "clean")


def test_metrics():
    r = wt.compute_metrics(["tp"] * 4 + ["fp"] * 6, [1.0] * 4 + [0.0] * 6,
                           ["tp", "tp", "tp", "fp", "tp", "fp", "fp", "fp", "fp", "fp"])
    assert (r["tp"], r["fp"], r["fn"], r["tn"]) == (3, 1, 1, 5)
    assert r["f1"] == pytest.approx(0.75)
    assert r["mcc"] == pytest.approx(14 / 24)
    none = wt.compute_metrics(["fp"], [0.0], ["fp"])
    assert none["precision"] is None


def test_simulated_outcome_is_pure():
    a = wt.simulate_outcome(0.6, 0.02, 0.25, 1, 42, "tp")
    assert a == wt.simulate_outcome(0.6, 0.02, 0.25, 1, 42, "tp")
    assert a in {"crash", "clean", "inconclusive"}


def test_config_digest():
    assert wt.config_digest() == wt.config_digest({})
    assert wt.config_digest({"seed": "1"}) != wt.config_digest()
    with pytest.raises(wt.ValidationError):
        wt.config_digest({"nope": "1"})


def test_small_training_run():
    out = wt.train_synthetic(seed=7, epochs_max=15, hidden1=32, hidden2=16, learning_rate=3e-3)
    assert out["epochs_run"] <= 15
    assert out["checkpoint"].startswith("triage-checkpoint 1\n")
    assert out["test"]["accuracy"] >= 0.9


def test_cli_in_process(tmp_path):
    code, out, err = wt.run_cli(["ingest", "--report", str(FIXTURES / "pipeline_report.json"),
                                 "--labels", str(FIXTURES / "pipeline_labels.jsonl"),
                                 "--out", str(tmp_path / "store.jsonl")])
    assert code == 0, err
    assert out.startswith("config_digest=")
    lines = (tmp_path / "store.jsonl").read_text().splitlines()
    assert len(lines) == 20
    assert all(json.loads(l)["label"] in ("tp", "fp") for l in lines)
    code, _, err = wt.run_cli(["evaluate"])
    assert code == 2


@pytest.mark.skipif("TRIAGE_BIN" not in os.environ, reason="CLI binary path not provided")
def test_cli_binary_usage_exit():
    import subprocess
    proc = subprocess.run([os.environ["TRIAGE_BIN"], "triage"], capture_output=True, text=True)
    assert proc.returncode == 2
