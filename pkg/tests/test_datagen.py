import json

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from prachml.channel import ChannelModel
from prachml.datagen import (
    DATASET_MAGIC,
    BinDataset,
    ScenarioConfig,
    balance,
    generate_dataset,
    load_scenario,
    simulate_burst,
    split,
    write_manifest,
)
from prachml.errors import ConfigError, DataError
from prachml.traffic import TrafficModel


def scenario(**kw):
    base = dict(channel=ChannelModel("AWGN", -16), n_bursts=40, seed=5)
    base.update(kw)
    return ScenarioConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        scenario(n_bursts=0)
    with pytest.raises(ConfigError):
        scenario(task="Other")
    with pytest.raises(ConfigError):
        scenario(overflow="wrap")
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"bogus": 1})


def test_config_roundtrip_and_fingerprint():
    s = scenario(traffic=TrafficModel.beta_burst())
    assert ScenarioConfig.from_dict(s.to_dict()) == s
    assert s.fingerprint() == scenario(traffic=TrafficModel.beta_burst(), name="other").fingerprint()
    assert s.fingerprint() != scenario(seed=6).fingerprint()
    assert s.link_fingerprint() == scenario(seed=6, task="Detection").link_fingerprint()
    assert s.link_fingerprint() != scenario(channel=ChannelModel("AWGN", -12)).link_fingerprint()


def test_load_scenario_yaml(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(
        "channel: {kind: ETU70, snr_db: -14}\n"
        "task: Detection\n"
        "n_bursts: 10\n"
        "traffic: {kind: FixedSingle}\n"
        "seed: 3\n"
    )
    s = load_scenario(p)
    assert s.channel.kind == "ETU70" and s.task == "Detection" and s.n_classes == 2
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "bad.yaml")


def test_fixed_single_counts():
    ds = generate_dataset(scenario(task="Detection", traffic=TrafficModel.fixed_single(), n_bursts=30))
    assert len(ds) == 30 * 64
    assert int(ds.labels.sum()) == 30


def test_noise_only_all_zero():
    ds = generate_dataset(scenario(task="Detection", traffic=TrafficModel.fixed_count(0), n_bursts=5))
    assert not ds.labels.any()
    assert np.all(ds.features >= 0)


def test_labels_match_independent_recount():
    cfg = scenario(n_bursts=6, overflow="clamp")
    ds = generate_dataset(cfg)
    for b in range(6):
        _, _, _, spec = simulate_burst(cfg, b)
        recount = np.array([np.sum(spec.preamble == v) for v in range(64)])
        rows = ds.records[ds.records["burst"] == b]
        np.testing.assert_array_equal(rows["count"], recount)
        np.testing.assert_array_equal(rows["label"], np.minimum(recount, 5))


def test_overflow_drop():
    ds = generate_dataset(scenario(n_bursts=60))
    assert ds.labels.max() <= 5
    assert np.array_equal(ds.labels, ds.counts)
    clamp = generate_dataset(scenario(n_bursts=60, overflow="clamp"))
    assert len(clamp) == 60 * 64 and len(ds) == np.sum(clamp.counts <= 5)


def test_label_histogram_is_binomial():
    ds = generate_dataset(scenario(n_bursts=300, overflow="clamp"))
    emp = np.bincount(ds.counts, minlength=121)[:121] / len(ds)
    ref = stats.binom(120, 1 / 64).pmf(np.arange(121))
    assert 0.5 * np.abs(emp - ref).sum() < 0.03


def test_determinism_and_jobs_independence():
    cfg = scenario(n_bursts=20)
    a = generate_dataset(cfg).to_bytes()
    assert a == generate_dataset(cfg).to_bytes()
    from prachml.datagen import simulate_bursts

    one = simulate_bursts(cfg, jobs=1, chunk=7)
    two = simulate_bursts(cfg, jobs=2, chunk=7)
    for x, y in zip(one, two):
        np.testing.assert_array_equal(x, y)


def test_file_roundtrip(tmp_path):
    ds = generate_dataset(scenario(n_bursts=4))
    ds.save(tmp_path / "d.prds")
    raw = (tmp_path / "d.prds").read_bytes()
    assert raw.startswith(DATASET_MAGIC)
    header = json.loads(raw.split(b"\n")[1])
    assert header["n_records"] == len(ds) and header["fingerprint"] == ds.fingerprint
    back = BinDataset.load(tmp_path / "d.prds")
    np.testing.assert_array_equal(back.records, ds.records)
    assert back.to_bytes() == raw


def test_file_errors(tmp_path):
    ds = generate_dataset(scenario(n_bursts=2))
    raw = ds.to_bytes()
    with pytest.raises(DataError):
        BinDataset.from_bytes(b"XXXX" + raw)
    with pytest.raises(DataError):
        BinDataset.from_bytes(raw[:-3])
    with pytest.raises(DataError):
        BinDataset.load(tmp_path / "nope.prds")


def test_record_fingerprints_unique():
    ds = generate_dataset(scenario(n_bursts=10, overflow="clamp"))
    assert np.unique(ds.records["fingerprint"]).size == len(ds)


def test_csv_export(tmp_path):
    ds = generate_dataset(scenario(n_bursts=2))
    ds.to_csv(tmp_path / "d.csv")
    df = pd.read_csv(tmp_path / "d.csv")
    assert list(df.columns) == [f"f{i}" for i in range(13)] + [
        "noise_floor", "label", "snr_db", "channel", "seed", "burst", "preamble"]
    assert len(df) == len(ds)
    np.testing.assert_allclose(df["f3"], ds.features[:, 3], rtol=1e-6)


def test_concat_rejects_mixed_scenarios():
    a = generate_dataset(scenario(n_bursts=2))
    b = generate_dataset(scenario(n_bursts=2, seed=9))
    assert len(BinDataset.concat([a, a])) == 2 * len(a)
    with pytest.raises(DataError):
        BinDataset.concat([a, b])


def test_balance():
    ds = generate_dataset(scenario(n_bursts=200))
    bal = balance(ds, seed=1)
    per = np.bincount(bal.labels, minlength=6)
    assert np.all(per == per[0]) and per[0] == np.bincount(ds.labels).min()
    assert generate_dataset(scenario(n_bursts=200, balance=True)).to_bytes() is not None
    with pytest.raises(DataError):
        balance(generate_dataset(scenario(n_bursts=1, traffic=TrafficModel.fixed_count(0))))


def test_split_stratified_and_seeded():
    ds = generate_dataset(scenario(n_bursts=50))
    a, b = split(ds, 0.5, seed=2)
    assert len(a) + len(b) == len(ds)
    assert not set(a.records["fingerprint"]) & set(b.records["fingerprint"])
    ideal = np.bincount(ds.labels, minlength=6) * 0.5
    assert np.all(np.abs(np.bincount(a.labels, minlength=6) - ideal) <= 1)
    a2, _ = split(ds, 0.5, seed=2)
    np.testing.assert_array_equal(a.records, a2.records)
    with pytest.raises(DataError):
        split(ds, 1.0)
    with pytest.raises(DataError):
        split(ds.where(np.zeros(len(ds), bool)), 0.5)


def test_split_even_halves():
    ds = generate_dataset(scenario(n_bursts=10, task="Detection", traffic=TrafficModel.fixed_single()))
    a, b = split(ds, 0.5, seed=0)
    assert len(a) == len(b) == 320


def test_manifest(tmp_path):
    path = write_manifest(tmp_path, "gen-dataset", {"x": 1}, 4)
    m = json.loads(open(path).read())
    assert m["command"] == "gen-dataset" and m["seed"] == 4 and m["tool_version"]
