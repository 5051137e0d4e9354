import csv
import json

import numpy as np
import pytest

from prachml.cli import run
from prachml.datagen import BinDataset
from prachml.models import Classifier
from prachml.threshold import ThresholdDetector

SCENARIO = """\
channel: {{kind: AWGN, snr_db: -16}}
task: {task}
n_bursts: {n}
traffic: {traffic}
seed: {seed}
"""

SMALL = """\
detection_train_bursts: 60
detection_test_bursts: 40
calibration_bursts: 1
noise_test_bursts: 1
multiplicity_train_bursts: 150
multiplicity_test_bursts: 20
rach_runs: 3
train: {epochs: 3}
"""


def write_scenario(path, task="Detection", n=20, traffic="{kind: FixedSingle}", seed=1):
    path.write_text(SCENARIO.format(task=task, n=n, traffic=traffic, seed=seed))
    return str(path)


@pytest.fixture
def det_files(tmp_path):
    single = write_scenario(tmp_path / "single.yaml")
    noise = write_scenario(tmp_path / "noise.yaml", n=160, traffic="{kind: FixedCount, n_ue: 0}", seed=2)
    assert run(["gen-dataset", "--scenario", single, "--out", str(tmp_path / "single"), "--jobs", "1"]) == 0
    assert run(["gen-dataset", "--scenario", noise, "--out", str(tmp_path / "noise"), "--jobs", "1"]) == 0
    return tmp_path


def test_gen_dataset_writes_data_and_manifest(tmp_path):
    s = write_scenario(tmp_path / "s.yaml", n=100)
    assert run(["gen-dataset", "--scenario", s, "--out", str(tmp_path / "d"), "--csv", "--jobs", "1"]) == 0
    ds = BinDataset.load(tmp_path / "d" / "dataset.prds")
    assert len(ds) == 6400 and ds.labels.sum() == 100
    m = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert m["command"] == "gen-dataset" and m["config"]["scenario"]["n_bursts"] == 100
    assert (tmp_path / "d" / "dataset.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    s = write_scenario(tmp_path / "s.yaml", n=10)
    for d in ("a", "b"):
        assert run(["gen-dataset", "--scenario", s, "--out", str(tmp_path / d), "--jobs", "1"]) == 0
    assert (tmp_path / "a" / "dataset.prds").read_bytes() == (tmp_path / "b" / "dataset.prds").read_bytes()


def test_output_root_env(tmp_path, monkeypatch):
    s = write_scenario(tmp_path / "s.yaml", n=2)
    monkeypatch.setenv("PRACHML_OUTPUT_ROOT", str(tmp_path / "root"))
    assert run(["gen-dataset", "--scenario", s, "--out", "rel", "--jobs", "1"]) == 0
    assert (tmp_path / "root" / "rel" / "manifest.json").exists()


def test_usage_errors(tmp_path, capsys):
    assert run(["gen-dataset", "--scenario", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "x")]) == 2
    assert run(["gen-dataset", "--bogus-flag"]) == 2
    assert run([]) == 2
    assert run(["train", "--data", str(tmp_path / "none.prds"), "--kind", "lr", "--out", str(tmp_path / "y")]) == 2


def test_calibrate_train_evaluate(det_files, capsys):
    t = det_files
    assert run(["calibrate-threshold", "--noise", str(t / "noise" / "dataset.prds"), "--out", str(t / "cal")]) == 0
    assert "alpha=" in capsys.readouterr().out
    det = Classifier.load(t / "cal" / "threshold.prm")
    assert det.kind == "threshold"
    cfg = t / "train.yaml"
    cfg.write_text("epochs: 3\nhidden: [8]\n")
    assert run(["train", "--data", str(t / "single" / "dataset.prds"), "--kind", "nn", "--config", str(cfg),
                "--seed", "4", "--out", str(t / "nn")]) == 0
    clf = Classifier.load(t / "nn" / "model.prm")
    assert clf.kind == "neural" and clf.metadata["seed"] == 4
    assert run(["evaluate", "--model", str(t / "cal" / "threshold.prm"), "--test", str(t / "single" / "dataset.prds"),
                "--noise", str(t / "noise" / "dataset.prds"), "--out", str(t / "ev")]) == 0
    with open(t / "ev" / "detection_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["metric"] for r in rows} == {"missed_detection", "false_alarm"}


def test_evaluate_requires_noise_for_detection(det_files):
    t = det_files
    Classifier(ThresholdDetector(9.0)).save(t / "thr.prm")
    assert run(["evaluate", "--model", str(t / "thr.prm"), "--test", str(t / "single" / "dataset.prds"),
                "--out", str(t / "ev")]) == 2


def test_assert_acceptance_failure_names_criterion(det_files, capsys):
    t = det_files
    Classifier(ThresholdDetector(1.0)).save(t / "loose.prm")
    code = run(["evaluate", "--model", str(t / "loose.prm"), "--test", str(t / "single" / "dataset.prds"),
                "--noise", str(t / "noise" / "dataset.prds"), "--assert-acceptance", "--out", str(t / "ev")])
    assert code == 2
    err = capsys.readouterr()
    assert "FAIL false_alarm<=1.5e-3 (threshold)" in err.out
    assert "false_alarm<=1.5e-3" in err.err


def test_assert_acceptance_pass(det_files):
    t = det_files
    Classifier(ThresholdDetector(50.0)).save(t / "strict.prm")
    assert run(["evaluate", "--model", str(t / "strict.prm"), "--test", str(t / "single" / "dataset.prds"),
                "--noise", str(t / "noise" / "dataset.prds"), "--assert-acceptance", "--out", str(t / "ev")]) == 0


def test_sweep_confusion_and_rach(tmp_path):
    tmpl = write_scenario(tmp_path / "t.yaml", task="Multiplicity", traffic="{kind: FixedCount, n_ue: 120}")
    cfg = tmp_path / "small.yaml"
    cfg.write_text(SMALL)
    out = tmp_path / "o"
    assert run(["sweep-snr", "--scenario", tmpl, "--snrs", "-16", "--config", str(cfg),
                "--out", str(out), "--jobs", "1"]) == 0
    with open(out / "detection_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 2 and {r["detector"] for r in rows} == {"threshold", "lr", "nn"}
    assert run(["confusion", "--scenario", tmpl, "--snrs", "-16", "--config", str(cfg),
                "--out", str(out), "--jobs", "1"]) == 0
    with open(out / "confusion.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2 * 36
    assert run(["rach-sim", "--confusion", str(out / "confusion.csv"), "--runs", "3", "--out", str(out)]) == 0
    with open(out / "rach_summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0].keys()) == ["policy", "seed", "mean_delay", "p95_delay", "msg3_collisions",
                                    "rars_sent", "success_rate", "drops"]
    assert len(rows) == 6
    assert json.loads((out / "manifest.json").read_text())["command"] == "rach-sim"


def test_rach_sim_oracle(tmp_path, capsys):
    assert run(["rach-sim", "--runs", "4", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "rach_summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(int(r["msg3_collisions"]) == 0 for r in rows if r["policy"] == "MultiplicityAware")
    assert "sign test" in capsys.readouterr().out


def test_paper_repro_tiny(tmp_path):
    cfg = tmp_path / "small.yaml"
    cfg.write_text(SMALL + "detection_snrs: [-16]\nmultiplicity_snrs: [-16]\nchannels: [AWGN]\n")
    assert run(["paper-repro", "--config", str(cfg), "--out", str(tmp_path / "r"), "--jobs", "1"]) == 0
    names = sorted(p.name for p in (tmp_path / "r").iterdir())
    for f in ("confusion.csv", "detection_sweep.csv", "manifest.json", "multiplicity_report.csv",
              "rach_summary.csv", "models"):
        assert f in names
    m = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert m["config"]["detection_snrs"] == [-16]
