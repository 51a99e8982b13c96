import json
import os

import pytest

from hoil.utils.core.errors import ConfigError
from hoil.utils.core.model import Mode, Pooling
from hoil.utils.core.run_config import (
    RunConfig, load_run_config, run_config_from_dict, run_config_to_dict,
)


def write_config(tmp_path, data):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_defaults_without_a_file():
    cfg = load_run_config()
    assert cfg == RunConfig(paths=cfg.paths)
    assert cfg.profile == "SMPL15_OBJ" and cfg.finetune_profile == "SMPL15"
    assert cfg.learning_rate == cfg.optimizer.lr_pretrain
    assert cfg.with_mode(Mode.FINETUNE).learning_rate == cfg.optimizer.lr_finetune


def test_toy_config_keeps_unnamed_defaults(toy_config):
    assert toy_config.model.channels == (32, 64)
    assert toy_config.model.pooling == Pooling.CPPOOL
    assert toy_config.model.grid.base_grid_size == 0.05
    assert toy_config.optimizer.batch_size == 4
    assert toy_config.optimizer.lr_pretrain == RunConfig().optimizer.lr_pretrain
    assert toy_config.sim.max_points == 256
    assert toy_config.sim.motion == "gait"


def test_shipped_default_matches_code_defaults():
    path = os.path.join(os.environ["ETC_DIR"], "config", "default.json")
    cfg = load_run_config(path)
    assert cfg.model == RunConfig().model
    assert cfg.hoicl == RunConfig().hoicl
    assert cfg.optimizer == RunConfig().optimizer


def test_unknown_key_suggests_a_name(tmp_path):
    path = write_config(tmp_path, {"model": {"chanels": [8, 16]}})
    with pytest.raises(ConfigError, match="model.chanels.*did you mean 'channels'"):
        load_run_config(path)


def test_invalid_values_become_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, {"model": {"grid": {"base_grid_size": 0.0}}}))
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, {"mode": "distill"}))
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, {"model": [1, 2]}))
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(str(tmp_path / "absent.json"))


def test_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"seed\": ")
    with pytest.raises(ConfigError):
        load_run_config(str(path))


def test_overrides_and_seed_environment(tmp_path, monkeypatch):
    path = write_config(tmp_path, {"seed": 3})
    assert load_run_config(path, overrides={"seed": 9}).seed == 9
    monkeypatch.setenv("HOIL_SEED", "21")
    assert load_run_config(path).seed == 21


def test_paths_resolve_against_the_config_file(tmp_path):
    cfg = load_run_config(write_config(tmp_path, {"paths": {"out_dir": "results"}}))
    assert cfg.paths.out_dir == os.path.join(str(tmp_path), "results")
    assert cfg.paths.data_dir == os.path.join(str(tmp_path), "data")


def test_dict_roundtrip(toy_config):
    data = run_config_to_dict(toy_config)
    assert data["mode"] == "pretrain"
    assert data["model"]["channels"] == [32, 64]
    assert "source_path" not in data
    assert run_config_from_dict(json.loads(json.dumps(data))) == toy_config
