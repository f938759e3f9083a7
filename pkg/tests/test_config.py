import json
from pathlib import Path

import pytest
import yaml

from action_signal.config.loader import ConfigManager, deep_merge
from action_signal.config.schema import DynamicsModelConfig, GridConfig, RunConfig
from action_signal.core.exceptions import ConfigurationError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


def test_deep_merge():
    base = {"simulator": {"seed": 1, "n_patients": 10}, "workers": 1}
    override = {"simulator": {"seed": 2}, "output_dir": "x"}
    merged = deep_merge(base, override)
    assert merged == {
        "simulator": {"seed": 2, "n_patients": 10},
        "workers": 1,
        "output_dir": "x",
    }
    assert base["simulator"]["seed"] == 1


def test_defaults():
    config = ConfigManager().load()
    assert config == RunConfig()
    assert config.grid.seeds == [0, 1, 2]
    assert config.report.histogram_bins == 50


def test_directory_files_merge_alphabetically(tmp_path):
    write_yaml(tmp_path / "b.yaml", {"simulator": {"seed": 9}})
    write_yaml(tmp_path / "a.yaml", {"simulator": {"seed": 1, "n_patients": 25}})
    (tmp_path / "notes.txt").write_text("ignored")
    manager = ConfigManager(str(tmp_path))
    assert [p.name for p in manager.config_files()] == ["a.yaml", "b.yaml"]
    config = manager.load()
    assert config.simulator.seed == 9
    assert config.simulator.n_patients == 25


def test_overrides_win(tmp_path):
    path = write_yaml(tmp_path / "run.yaml", {"workers": 3, "grid": {"seeds": [0, 1]}})
    config = ConfigManager(str(path), {"workers": 5, "grid": {"metrics": ["SIRS"]}}).load()
    assert config.workers == 5
    assert config.grid.seeds == [0, 1]
    assert config.grid.metrics == ["SIRS"]


def test_json_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"simulator": {"n_patients": 12}}))
    assert ConfigManager(str(path)).load().simulator.n_patients == 12


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match="Unknown top-level keys: colour"):
        RunConfig.from_dict({"colour": "blue"})
    with pytest.raises(ConfigurationError, match="Unknown keys in 'grid'"):
        RunConfig.from_dict({"grid": {"seed": 1}})


def test_invalid_values_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match="workers"):
        RunConfig.from_dict({"workers": 0})
    with pytest.raises(ConfigurationError, match="unknown stages"):
        RunConfig.from_dict({"stages": ["simulate", "deploy"]})
    with pytest.raises(ConfigurationError, match="unsupported grid metrics"):
        GridConfig.from_dict({"metrics": ["qSOFA"]})
    with pytest.raises(ConfigurationError, match="distinct"):
        GridConfig.from_dict({"seeds": [1, 1]})


def test_missing_path(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        ConfigManager(str(tmp_path / "absent.yaml")).load()


def test_malformed_file(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("- just\n- a list\n")
    with pytest.raises(ConfigurationError, match="mapping"):
        ConfigManager(str(path)).load()


def test_hash_ignores_execution_settings():
    base = RunConfig()
    moved = RunConfig.from_dict({"workers": 6, "output_dir": "elsewhere"})
    assert moved.config_hash() == base.config_hash()
    reseeded = RunConfig.from_dict({"simulator": {"seed": 43}})
    assert reseeded.config_hash() != base.config_hash()
    assert len(base.config_hash()) == 64


def test_save_and_reload(tmp_path):
    config = RunConfig.from_dict({"simulator": {"n_patients": 17}, "workers": 2})
    target = tmp_path / "out" / "run.yaml"
    ConfigManager().save(target, config)
    assert ConfigManager(str(target)).load() == config


@pytest.mark.parametrize("name", ["desk.yaml", "sensitivity.yaml", "tiny.yaml"])
def test_shipped_configs_load(name):
    config = ConfigManager(str(CONFIG_DIR / name)).load()
    assert config.simulator.n_patients > 0


def test_shipped_desk_and_sensitivity_differ_only_in_effect():
    desk = ConfigManager(str(CONFIG_DIR / "desk.yaml")).load()
    sensitivity = ConfigManager(str(CONFIG_DIR / "sensitivity.yaml")).load()
    assert desk.simulator.action_effect_strength == 0.0
    assert sensitivity.simulator.action_effect_strength == 2.0
    assert desk.grid == sensitivity.grid
    assert desk.config_hash() != sensitivity.config_hash()


@pytest.mark.parametrize("name", ["desk.yaml", "sensitivity.yaml"])
def test_shipped_desk_configs_use_default_architecture(name):
    model = ConfigManager(str(CONFIG_DIR / name)).load().model
    defaults = DynamicsModelConfig()
    assert (model.embed_dim, model.heads, model.layers_per_block, model.blocks) == (
        defaults.embed_dim,
        defaults.heads,
        defaults.layers_per_block,
        defaults.blocks,
    )
    assert (model.embed_dim, model.heads, model.layers_per_block) == (64, 4, 2)
