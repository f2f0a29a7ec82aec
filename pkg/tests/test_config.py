from __future__ import annotations

import pytest

from iotforensics.config import ConfigError, Params, PipelineConfig, config_from_dict, load_config


def test_defaults_match_module_constants():
    cfg = load_config(None)
    p = cfg.params
    assert (p.slot_ms, p.epsilon, p.tau, p.batch_size, p.flush_ms, p.window, p.ratio) == \
        (10_000, 1e-3, None, 10, 500, 30, 0.5)
    assert cfg.paths.scenario == "office-baseline"


def test_file_values_and_overrides(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("params:\n  epsilon: 0.01\n  window: 20\npaths:\n  scenario: office-baseline\n")
    cfg = load_config(path)
    assert cfg.params.epsilon == 0.01 and cfg.params.window == 20
    cfg2 = cfg.override(window=40, epsilon=None)
    assert cfg2.params.window == 40 and cfg2.params.epsilon == 0.01
    assert cfg2.analysis().window == 40


@pytest.mark.parametrize("doc, fragment", [
    ({"extras": {}}, "section 'extras'"),
    ({"params": {"slots": 3}}, "params.slots"),
    ({"paths": {"model_dir": "x"}}, "paths.model_dir"),
    ({"params": {"ratio": 1.0}}, "params.ratio"),
    ({"params": {"epsilon": 0}}, "params.epsilon"),
    ({"params": {"tau": 1.5}}, "params.tau"),
    ({"params": {"batch_size": 0}}, "params.batch_size"),
    ({"params": {"seed": True}}, "params.seed"),
    ({"params": {"train_fraction": 1.0}}, "params.train_fraction"),
    ({"params": []}, "params must be a mapping"),
])
def test_bad_config_rejected(doc, fragment):
    with pytest.raises(ConfigError, match=fragment.replace(".", r"\.").replace("(", r"\(")):
        config_from_dict(doc)


def test_unknown_override_key():
    with pytest.raises(ConfigError, match="unknown config key"):
        PipelineConfig().override(windw=3)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("params: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_round_trip_through_dict():
    cfg = PipelineConfig(params=Params(window=12))
    assert config_from_dict(cfg.to_dict()) == cfg
