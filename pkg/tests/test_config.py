from pathlib import Path

import pytest
import yaml

from csilab.config import (ConfigError, config_to_dict, dump_config, parse_config, parse_config_dict,
                           scene_config)
from csilab.families import street

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))


def test_minimal_static_defaults():
    cfg = parse_config_dict({"kind": "static", "seed": 1, "features": {"oversampling": 1}})
    assert cfg.model["hidden"] == [100, 100, 100]
    assert cfg.training["optimizer"] == "adam"
    assert cfg.evaluation["n_train"] == 20000
    assert cfg.scene == {"family": "street"}
    assert scene_config(cfg) == street()


def test_misspelled_key_named_with_section():
    with pytest.raises(ConfigError) as e:
        parse_config_dict({"kind": "static", "seed": 1, "features": {"oversampling": 1},
                           "training": {"learnig_rate": 0.1}})
    assert any("training.learnig_rate" in m for m in e.value.errors)


def test_all_errors_reported():
    with pytest.raises(ConfigError) as e:
        parse_config_dict({"kind": "grouping", "features": {}, "evaluation": {"taus": [2.0]}, "bogus": 1})
    msgs = " ".join(e.value.errors)
    for needle in ("seed", "features.oversampling", "evaluation.sinr_min", "evaluation.taus", "bogus"):
        assert needle in msgs


def test_safety_fields_have_no_silent_default():
    for raw in ({"kind": "static", "features": {"oversampling": 1}},
                {"kind": "static", "seed": 1},
                {"kind": "grouping", "seed": 1, "features": {"oversampling": 1}}):
        with pytest.raises(ConfigError):
            parse_config_dict(raw)


def test_type_and_domain_errors():
    for bad in ({"seed": -1}, {"seed": True}, {"kind": "nope"},
                {"scene": {"family": "street", "user_region": [[5, 1], [0, 1]]}},
                {"features": {"oversampling": 0}}):
        raw = {"kind": "static", "seed": 1, "features": {"oversampling": 1}, **bad}
        with pytest.raises(ConfigError):
            parse_config_dict(raw)
    with pytest.raises(ConfigError):
        parse_config_dict({"kind": "sequence", "seed": 1, "features": {"oversampling": 1, "l_out": 3}})
    with pytest.raises(ConfigError):
        parse_config_dict({"kind": "scaling", "seed": 1, "model": {"hidden": [3]}})


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_roundtrip(path, tmp_path):
    cfg = parse_config(path)
    out = tmp_path / "c.yaml"
    out.write_text(dump_config(cfg))
    again = parse_config(out)
    assert again == cfg
    assert yaml.safe_load(dump_config(again)) == config_to_dict(cfg)


def test_scene_overrides_applied():
    cfg = parse_config_dict({"kind": "dependence", "seed": 0, "features": {"oversampling": 2},
                             "scene": {"family": "street", "num_scatterers": 0, "los_enabled": {"mbs": False},
                                       "fixed_scatterers": [{"position": [1, 2], "reflectivity": {"re": 0.1,
                                                                                                   "im": 0.2}}]}})
    sc = scene_config(cfg)
    assert sc.num_scatterers == 0 and sc.los_enabled == {"mbs": False}
    assert sc.fixed_scatterers[0].reflectivity == 0.1 + 0.2j


def test_missing_or_invalid_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "none.yaml")
    p = tmp_path / "bad.yaml"
    p.write_text("kind: [unclosed")
    with pytest.raises(ConfigError):
        parse_config(p)
