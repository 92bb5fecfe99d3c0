import json

import pytest

from compgcn.config import ConfigError, RunConfig, grid_configs, load_config


def write(tmp_path, payload, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return p


def test_load_minimal_and_defaults(tmp_path):
    cfg = load_config(write(tmp_path, {"task": "link-prediction", "dataset": "d"}))
    assert cfg.lr == 0.001 and cfg.label_smoothing == 0.1 and cfg.score_fn == "distmult"
    assert cfg.model.dims == [32, 32] and cfg.model.composition == "mult"


def test_round_trip_through_json(tmp_path):
    cfg = RunConfig(task="graph-classification", dataset="x", lr=0.0001, seed=3,
                    grid={"K": [1, 2], "dropout": [0.0, 0.3]})
    back = load_config(write(tmp_path, json.loads(cfg.to_json())))
    assert back == cfg


def test_missing_file_named(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.json"):
        load_config(tmp_path / "nope.json")


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ConfigError, match="bad.json"):
        load_config(p)


@pytest.mark.parametrize("payload,where", [
    ({"task": "clustering"}, "task"),
    ({"task": "link-prediction", "lr": -1}, "lr"),
    ({"task": "link-prediction", "extra": 1}, "<root>"),
    ({"task": "link-prediction", "model": {"dims": [4], "composition": "add"}}, "model/composition"),
    ({"task": "link-prediction", "grid": {"lr": [0.5]}}, "grid/lr"),
    ({"task": "link-prediction", "grid": {"K": [4]}}, "grid/K"),
    ({"task": "link-prediction", "grid": {"momentum": [0.9]}}, "grid"),
])
def test_schema_violations(payload, where):
    with pytest.raises(ConfigError, match=where):
        RunConfig.from_dict(payload)


def test_layer_count_consistency():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"task": "link-prediction", "model": {"dims": [4, 4], "K": 2}})
    cfg = RunConfig.from_dict({"task": "link-prediction", "model": {"dims": [4, 4, 4], "K": 2}})
    assert cfg.model.num_layers == 2


def test_direct_grid_validation():
    with pytest.raises(ConfigError):
        RunConfig(grid={"batch_size": [64]})


def test_grid_expansion():
    cfg = RunConfig(grid={"K": [1, 2, 3], "lr": [0.001, 0.0001], "batch_size": [128, 256],
                          "dropout": [0.0, 0.1, 0.2, 0.3]})
    configs = grid_configs(cfg)
    assert len(configs) == 3 * 2 * 2 * 4
    assert all(c.grid is None for c in configs)
    assert {c.model.num_layers for c in configs} == {1, 2, 3}
    assert {c.model.dropout for c in configs} == {0.0, 0.1, 0.2, 0.3}
    assert {(c.lr, c.batch_size) for c in configs} == {(a, b) for a in (0.001, 0.0001)
                                                      for b in (128, 256)}
    assert cfg.model.dropout == 0.0  # the base config is left untouched
    assert grid_configs(RunConfig()) == [RunConfig()]
