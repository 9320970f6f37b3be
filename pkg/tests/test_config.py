import json

import pytest

from pseudoboost.config import SEED_ENV, ExperimentConfig, load_config, parse_config, resolve_seed
from pseudoboost.exceptions import ConfigError


def test_defaults_are_the_desk_experiment():
    cfg = ExperimentConfig()
    assert (cfg.dimension, cfg.mu_norm, cfg.noise, cfg.loss) == (20, 2.0, "gaussian", "logistic")
    assert cfg.selftrain.init.theta0_deg == 20.0
    assert (cfg.supervised.eta, cfg.supervised.iterations, cfg.supervised.runs) == (0.01, 2000, 4)


def test_json_round_trip():
    cfg = ExperimentConfig().replace(**{"selftrain.eps": 0.05, "supervised.runs": 8, "seed": 9})
    back = parse_config(cfg.to_json())
    assert back == cfg
    assert back.to_json() == cfg.to_json()


def test_partial_file_keeps_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"mu_norm": 3, "selftrain": {"init": {"theta0_deg": 10}}}))
    cfg = load_config(p)
    assert cfg.mu_norm == 3.0 and isinstance(cfg.mu_norm, float)
    assert cfg.selftrain.init.theta0_deg == 10.0 and cfg.selftrain.eps == 0.02


@pytest.mark.parametrize("doc, fragment", [
    ({"selftrain": {"epsilon": 0.1}}, "unknown key 'selftrain.epsilon'"),
    ({"dimenson": 3}, "unknown key 'dimenson'"),
    ({"trials": 2.5}, "trials: expected int"),
    ({"dimension": True}, "dimension: expected int"),
    ({"noise": "cauchy"}, "noise: must be one of"),
    ({"selftrain": {"init": {"theta0_deg": 120}}}, "selftrain.init.theta0_deg"),
    ({"selftrain": {"init": {"mode": "file"}}}, "selftrain.init.path"),
    ({"supervised": []}, "supervised: expected an object"),
    ({"mu_norm": None}, "mu_norm: null is not allowed"),
    ({"pipeline": {"handoff_threshold": 0.9}}, "pipeline.handoff_threshold"),
])
def test_invalid_documents_name_the_key(doc, fragment):
    with pytest.raises(ConfigError, match=fragment.replace(".", r"\.")):
        parse_config(json.dumps(doc))


def test_json_syntax_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "dimension": 5,\n  "mu_norm": ,\n}')
    with pytest.raises(ConfigError, match=r"bad\.json: line 3, column 14"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "missing.json")


def test_seed_precedence():
    cfg = ExperimentConfig(seed=5)
    assert resolve_seed(cfg, None, {}).seed == 5
    assert resolve_seed(cfg, None, {SEED_ENV: "11"}).seed == 11
    assert resolve_seed(cfg, 3, {SEED_ENV: "11"}).seed == 3
    assert resolve_seed(cfg, None, {SEED_ENV: ""}).seed == 5
    with pytest.raises(ConfigError, match=SEED_ENV):
        resolve_seed(cfg, None, {SEED_ENV: "abc"})
    with pytest.raises(ConfigError):
        resolve_seed(cfg, 2**64, {})
