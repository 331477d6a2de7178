import json

import pytest

from sdnlab.scenarios import (
    ConfigError,
    ProbeSchedule,
    ScenarioConfig,
    expand_configs,
    gen_data,
    run_episode,
)
from sdnlab.telemetry import LABELS, OUTCOME_FEATURES, read_dataset


def test_presets_follow_named_paths():
    assert ScenarioConfig.preset("s1", "low").path == (0, 3, 8, 9)
    assert ScenarioConfig.preset("s2", "low").path == (0, 1, 7, 10, 9)
    assert ScenarioConfig.preset("s3", "high").path == (0, 2, 5, 13, 10, 9)
    low, high = ScenarioConfig.preset("s1", "low"), ScenarioConfig.preset("s1", "high")
    assert [b.rate for b in low.background] == [1.5e6] * 2
    assert [b.rate for b in high.background] == [2.25e6] * 4
    assert low.background[0].src_addr == "10.0.0.9" and low.background[0].dst_addr == "10.0.0.4"
    assert ScenarioConfig.preset("s2", "high").repetitions == 145


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError) as e:
        ScenarioConfig.from_dict({"scenario": "s1", "level": "medium"})
    assert e.value.field == "level"
    with pytest.raises(ConfigError) as e:
        ScenarioConfig.from_dict({"scenario": "custom", "level": "low", "path": [0, 5, 9]})
    assert e.value.field == "path"
    with pytest.raises(ConfigError) as e:
        expand_configs({"runs": [{"scenario": "s1", "level": "low"},
                                 {"scenario": "custom", "level": "low", "path": [0, 3, 8, 9],
                                  "background": [{"path": [8, 3], "rate": -1}]}]})
    assert e.value.field.startswith("runs[1].background[0]")
    with pytest.raises(ConfigError):
        ProbeSchedule(lead=0)


def test_matrix_expansion_and_seed_override():
    cfgs = expand_configs({"scenarios": ["s1", "s3"], "levels": ["high"], "repetitions": 2}, seed=9)
    assert [(c.scenario, c.level, c.repetitions, c.seed) for c in cfgs] == [
        ("s1", "high", 2, 9), ("s3", "high", 2, 9)]


def test_custom_scenario_round_trip():
    doc = {"scenario": "custom", "level": "high", "path": [0, 3, 4, 5, 12, 9],
           "background": [{"path": [12, 5], "level": "high"}], "repetitions": 1, "video": False}
    cfg = ScenarioConfig.from_dict(doc)
    assert len(cfg.background) == 4
    assert ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_one_low_repetition_is_one_row(tmp_path):
    cfg = ScenarioConfig.preset("s1", "low", repetitions=1, video=False)
    recs = gen_data([cfg], tmp_path / "d.csv")
    assert len(recs) == 1 and recs[0].label == 0
    assert read_dataset(tmp_path / "d.csv") == recs
    assert set(recs[0].absent) == set(OUTCOME_FEATURES)
    assert recs[0]["hop_count"] == 3


def test_label_balance_matches_repetitions(tmp_path):
    cfgs = [ScenarioConfig.preset("s2", lv, repetitions=n, video=False)
            for lv, n in (("low", 3), ("high", 2))]
    recs = gen_data(cfgs, tmp_path / "d.csv")
    assert [r.label for r in recs] == [LABELS["low"]] * 3 + [LABELS["high"]] * 2


def test_episode_with_video_fills_every_feature():
    rec = run_episode(ScenarioConfig.preset("s3", "low", video=True), 0)
    assert rec.absent == ()
    assert rec["file_size"] <= rec["original_file_size"]
    assert rec["hop_count"] == 5


def test_rerun_is_byte_identical(tmp_path):
    cfgs = [ScenarioConfig.preset("s1", lv, repetitions=2, video=False, seed=3) for lv in LABELS]
    gen_data(cfgs, tmp_path / "a.csv")
    gen_data(cfgs, tmp_path / "b.csv", jobs=2)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
