"""Stochastic clinician dosing policy."""

import numpy as np

from action_signal.config.schema import SimulatorConfig
from action_signal.data.trajectory import ActionRecord, StateObservation
from action_signal.simulator.constants import DEFAULT_CONSTANTS, SimulatorConstants
from action_signal.simulator.latent import LatentState
from action_signal.simulator.observation import indicated_vasopressor_rate, observed_severity


def policy_signal(
    obs: StateObservation,
    latent: LatentState,
    config: SimulatorConfig,
    constants: SimulatorConstants = DEFAULT_CONSTANTS,
) -> float:
    """Severity the clinician doses against: (1 - kappa) * observed + kappa * latent."""
    kappa = config.confounding
    return (1.0 - kappa) * observed_severity(obs.observed, constants) + kappa * latent.illness


def clinician_policy(
    obs: StateObservation,
    latent: LatentState,
    config: SimulatorConfig,
    rng: np.random.Generator,
    constants: SimulatorConstants = DEFAULT_CONSTANTS,
) -> ActionRecord:
    """Choose the doses for the coming hour.

    Base doses grow with the blended severity signal and are multiplied by
    independent log-normal factors ``exp(sigma_pi * eps)``. When latent
    illness is mild the vasopressor is withheld with probability
    ``vasopressor_sparsity``. All three random draws are made on every call.

    Args:
        obs: Clinician's current view of the channels; NaN where never measured
        latent: Hidden patient state (read only through the confounding weight
            and the sparsity gate)
        config: Simulator configuration
        rng: Policy stream of the patient
        constants: Generative constants

    Returns:
        ActionRecord with non-negative doses
    """
    eps = rng.standard_normal(2)
    withhold_draw = rng.random()

    signal = policy_signal(obs, latent, config, constants)
    iv_base = constants.iv_baseline + constants.iv_per_severity * max(signal, 0.0)
    vaso_base = indicated_vasopressor_rate(signal, constants)

    sigma = config.policy_diversity
    iv_fluid = iv_base * float(np.exp(sigma * eps[0]))
    vasopressor = vaso_base * float(np.exp(sigma * eps[1]))
    mild = latent.illness < constants.sparsity_illness_gate
    if mild and withhold_draw < config.vasopressor_sparsity:
        vasopressor = 0.0
    return ActionRecord(iv_fluid=iv_fluid, vasopressor=vasopressor)
