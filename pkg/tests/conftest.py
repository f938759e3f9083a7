"""Shared fixtures: a small simulated cohort, its prepared splits and tiny models."""

import numpy as np
import pytest
import yaml

from action_signal.config.schema import (
    DynamicsModelConfig,
    PreprocessingConfig,
    RunConfig,
    SimulatorConfig,
)
from action_signal.preprocessing.dataset import build_model_dataset
from action_signal.preprocessing.pipeline import prepare_cohort
from action_signal.simulator.cohort import simulate_cohort

TINY_RUN = {
    "simulator": {"n_patients": 40, "max_hours": 30, "action_effect_strength": 1.0, "seed": 3},
    "model": {
        "embed_dim": 8,
        "heads": 2,
        "layers_per_block": 1,
        "context_length": 4,
        "dropout": 0.0,
    },
    "training": {"max_epochs": 1, "max_train_samples": 200, "batch_size": 32},
    "grid": {"metrics": ["SOFA"], "horizons": [6], "seeds": [0], "retained_samples": 50},
    "behavior_cloning": {
        "seeds": [0],
        "hidden_dim": 8,
        "training": {"max_epochs": 1, "max_train_samples": 200, "batch_size": 32},
        "retained_samples": 50,
    },
    "report": {
        "histograms": [{"metric": "SOFA", "horizon": 6, "condition": "True"}],
        "bc_histogram_horizons": [1, 6],
    },
}


@pytest.fixture(scope="session")
def sim_config():
    return SimulatorConfig(n_patients=40, max_hours=24, action_effect_strength=1.0, seed=5)


@pytest.fixture(scope="session")
def cohort(sim_config):
    return simulate_cohort(sim_config)


@pytest.fixture(scope="session")
def prepared(cohort):
    return prepare_cohort(cohort, PreprocessingConfig(), horizons=(6, 12, 18))


@pytest.fixture
def tiny_model_config():
    return DynamicsModelConfig(
        embed_dim=8,
        heads=2,
        layers_per_block=1,
        blocks=2,
        dropout=0.0,
        context_length=4,
        ffn_multiplier=4,
    )


@pytest.fixture(scope="session")
def test_records(prepared):
    return build_model_dataset(prepared.test, 6, "SOFA", prepared.stats, context_length=4)


@pytest.fixture
def tiny_run_config(tmp_path):
    data = dict(TINY_RUN)
    data["output_dir"] = str(tmp_path / "runs")
    return RunConfig.from_dict(data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config_file(tmp_path):
    data = dict(TINY_RUN)
    data["output_dir"] = str(tmp_path / "runs")
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path
