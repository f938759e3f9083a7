import numpy as np
import pytest

from action_signal.config.schema import SimulatorConfig
from action_signal.core.exceptions import ConfigurationError
from action_signal.data.trajectory import ActionRecord, StateObservation
from action_signal.simulator.cohort import (
    demographic_channels,
    initial_latent,
    observation_channels,
    simulate_cohort,
    simulate_patient,
)
from action_signal.simulator.constants import DEFAULT_CONSTANTS, OBSERVATION_MODEL
from action_signal.simulator.latent import LatentState, step_latent
from action_signal.simulator.observation import emit_observation
from action_signal.simulator.policy import clinician_policy


def assert_same_trajectory(a, b):
    assert a.patient_id == b.patient_id
    np.testing.assert_array_equal(a.demographics, b.demographics)
    np.testing.assert_array_equal(a.observed_mask, b.observed_mask)
    np.testing.assert_array_equal(a.observations, b.observations)
    np.testing.assert_array_equal(a.actions, b.actions)
    np.testing.assert_array_equal(a.severity, b.severity)


def test_cohort_shape_and_ids(cohort, sim_config):
    assert len(cohort) == sim_config.n_patients
    assert cohort.patient_ids[0] == "P000000"
    assert cohort.schema.observation_channels == observation_channels(sim_config)
    assert cohort.schema.demographic_channels == ("age", "gender", "comorbidity_1", "comorbidity_2")
    for traj in cohort:
        assert 1 <= len(traj) <= sim_config.max_hours
        assert np.all(traj.actions >= 0)
        sofa, sirs, shock_index = traj.severity.T
        assert np.all((sofa >= 0) & (sofa <= 24))
        assert np.all((sirs >= 0) & (sirs <= 4))
        assert np.all(shock_index > 0)
        # Unmeasured cells are NaN, measured cells finite
        assert np.all(np.isnan(traj.observations[~traj.observed_mask]))


def test_simulation_is_deterministic(sim_config):
    first = simulate_cohort(sim_config, indices=range(5))
    second = simulate_cohort(sim_config, indices=range(5))
    for a, b in zip(first, second):
        assert_same_trajectory(a, b)


def test_worker_count_does_not_change_cohort(sim_config):
    serial = simulate_cohort(sim_config, workers=1, indices=range(6))
    parallel = simulate_cohort(sim_config, workers=2, indices=range(6))
    for a, b in zip(serial, parallel):
        assert_same_trajectory(a, b)


def test_patient_depends_only_on_its_index(sim_config):
    whole = simulate_cohort(sim_config, indices=range(4))
    alone = simulate_patient(3, sim_config)
    assert_same_trajectory(whole.trajectories[3], alone)


def test_actions_have_no_effect_without_action_strength():
    config = SimulatorConfig(n_patients=1, max_hours=48, action_effect_strength=0.0, seed=11)
    for index in range(5):
        original = simulate_patient(index, config)
        override = np.zeros((config.max_hours, 2))
        override[:, 0] = 1000.0
        replayed = simulate_patient(index, config, action_override=override)

        assert len(original) == len(replayed)
        np.testing.assert_array_equal(original.observations, replayed.observations)
        np.testing.assert_array_equal(original.severity, replayed.severity)
        np.testing.assert_array_equal(replayed.actions[:, 0], 1000.0)


def test_actions_change_outcomes_with_action_strength():
    config = SimulatorConfig(n_patients=1, max_hours=48, action_effect_strength=2.0, seed=11)
    changed = 0
    for index in range(5):
        original = simulate_patient(index, config)
        replayed = simulate_patient(index, config, action_override=np.zeros((config.max_hours, 2)))
        n = min(len(original), len(replayed))
        same_length = len(original) == len(replayed)
        if not same_length or not np.array_equal(original.severity[:n], replayed.severity[:n]):
            changed += 1
    assert changed > 0


def test_older_comorbid_patients_start_sicker():
    young = np.array([30.0, 0.0, 0.0, 0.0])
    old = np.array([85.0, 0.0, 1.0, 1.0])
    for seed in range(20):
        a = initial_latent(young, np.random.default_rng(seed), DEFAULT_CONSTANTS)
        b = initial_latent(old, np.random.default_rng(seed), DEFAULT_CONSTANTS)
        assert b.illness > a.illness


def test_extra_channels_extend_schema():
    config = SimulatorConfig(
        n_patients=2, max_hours=10, extra_channels=3, n_comorbidities=1, seed=1
    )
    cohort = simulate_cohort(config)
    assert observation_channels(config)[-3:] == ("aux_1", "aux_2", "aux_3")
    assert demographic_channels(config) == ("age", "gender", "comorbidity_1")
    assert all(t.observations.shape[1] == 19 for t in cohort)


def test_policy_without_diversity_ignores_its_noise():
    config = SimulatorConfig(policy_diversity=0.0, confounding=0.0, vasopressor_sparsity=0.0)
    latent = LatentState(illness=6.0, volume_deficit=1.0, tone_deficit=1.0, baseline=4.0)
    values = simulate_patient(0, SimulatorConfig(n_patients=1, max_hours=2, seed=9)).observations[0]
    obs = StateObservation(values, np.isfinite(values))
    a = clinician_policy(obs, latent, config, np.random.default_rng(1))
    b = clinician_policy(obs, latent, config, np.random.default_rng(2))
    assert a == b
    assert a.iv_fluid >= DEFAULT_CONSTANTS.iv_baseline

    noisy = SimulatorConfig(policy_diversity=1.0, confounding=0.0, vasopressor_sparsity=0.0)
    c = clinician_policy(obs, latent, noisy, np.random.default_rng(1))
    d = clinician_policy(obs, latent, noisy, np.random.default_rng(2))
    assert c.iv_fluid != d.iv_fluid


@pytest.mark.parametrize(
    "changes",
    [
        {"n_patients": 0},
        {"max_hours": 400},
        {"action_effect_strength": -1.0},
        {"confounding": 1.5},
        {"missingness_rate": 1.0},
    ],
)
def test_invalid_simulator_config(changes):
    with pytest.raises(ConfigurationError):
        SimulatorConfig.from_dict(changes)


def test_step_latent_ignores_dose_without_action_strength():
    config = SimulatorConfig(action_effect_strength=0.0)
    latent = LatentState(illness=6.0, volume_deficit=2.0, tone_deficit=1.0)
    idle = step_latent(latent, ActionRecord(0.0, 0.0), config, np.random.default_rng(3))
    dosed = step_latent(latent, ActionRecord(500.0, 0.3), config, np.random.default_rng(3))
    assert idle == dosed


def test_step_latent_dose_lowers_illness_with_action_strength():
    config = SimulatorConfig(action_effect_strength=2.0)
    latent = LatentState(illness=6.0, volume_deficit=2.0, tone_deficit=1.0)
    idle = step_latent(latent, ActionRecord(0.0, 0.0), config, np.random.default_rng(3))
    dosed = step_latent(latent, ActionRecord(250.0, 0.1), config, np.random.default_rng(3))
    assert dosed.illness < idle.illness
    assert dosed.volume_deficit <= idle.volume_deficit


def test_emit_observation_respects_channel_ranges():
    config = SimulatorConfig(missingness_rate=0.0)
    rng = np.random.default_rng(0)
    for illness in (0.0, 5.0, 10.0):
        latent = LatentState(illness=illness, volume_deficit=3.0, tone_deficit=3.0)
        state, mask = emit_observation(latent, config, rng)
        assert mask.all()
        for name, model in OBSERVATION_MODEL.items():
            assert model.low <= getattr(state, name) <= model.high, name
        assert state.gcs == round(state.gcs)
        assert state.on_mech_vent == (illness >= DEFAULT_CONSTANTS.ventilation_threshold)
        assert state.vasopressor_rate >= 0.0
