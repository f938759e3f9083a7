"""Hidden disease dynamics of a simulated patient."""

from dataclasses import dataclass

import numpy as np

from action_signal.config.schema import SimulatorConfig
from action_signal.data.trajectory import ActionRecord
from action_signal.simulator.constants import DEFAULT_CONSTANTS, SimulatorConstants

ILLNESS_RANGE = (0.0, 10.0)


@dataclass(frozen=True)
class LatentState:
    """Unobserved patient state.

    Attributes:
        illness: Severity driver in [0, 10]
        volume_deficit: Dehydration axis, reduced by IV fluids
        tone_deficit: Vasodilation axis, reduced by vasopressors
        baseline: Patient-specific level illness reverts to
    """

    illness: float
    volume_deficit: float
    tone_deficit: float
    baseline: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "illness", float(np.clip(self.illness, *ILLNESS_RANGE)))


def treatment_benefit(
    action: ActionRecord, latent: LatentState, constants: SimulatorConstants
) -> float:
    """Benefit of a dose given the current deficits.

    Proportionate dosing scores up to the deficit it addresses; fluids beyond
    the volume deficit plus a slack are harmful.
    """
    fluid_units = action.iv_fluid / constants.fluid_unit
    pressor_units = action.vasopressor / constants.pressor_unit
    benefit = min(fluid_units, latent.volume_deficit) + min(pressor_units, latent.tone_deficit)
    overdose = max(0.0, fluid_units - latent.volume_deficit - constants.overdose_slack)
    return benefit - constants.overdose_harm * overdose


def step_latent(
    latent: LatentState,
    action: ActionRecord,
    config: SimulatorConfig,
    rng: np.random.Generator,
    constants: SimulatorConstants = DEFAULT_CONSTANTS,
) -> LatentState:
    """Advance the latent state by one hour under a treatment action.

    Three standard normals are drawn on every call, so the noise stream does
    not depend on the action. With ``action_effect_strength == 0`` the action
    terms are not evaluated at all.

    Args:
        latent: Current latent state
        action: Dose delivered during the coming hour
        config: Simulator configuration (effect strength, noise scale)
        rng: Latent noise stream of the patient
        constants: Generative constants

    Returns:
        Next LatentState
    """
    eps = rng.standard_normal(3) * config.noise_scale
    c = constants

    illness = (
        latent.illness
        + c.illness_reversion * (latent.baseline - latent.illness)
        + c.deficit_coupling * (latent.volume_deficit + latent.tone_deficit)
        + c.illness_noise * eps[0]
    )
    volume = latent.volume_deficit + c.volume_reversion * (
        c.volume_target * latent.illness - latent.volume_deficit
    )
    tone = latent.tone_deficit + c.tone_reversion * (
        c.tone_target * latent.illness - latent.tone_deficit
    )
    volume += c.deficit_noise * eps[1]
    tone += c.deficit_noise * eps[2]

    alpha = config.action_effect_strength
    if alpha > 0:
        illness -= alpha * c.treatment_benefit * treatment_benefit(action, latent, c)
        volume -= alpha * c.fluid_deficit_effect * action.iv_fluid / c.fluid_unit
        tone -= alpha * c.pressor_deficit_effect * action.vasopressor / c.pressor_unit

    return LatentState(
        illness=illness,
        volume_deficit=max(0.0, volume),
        tone_deficit=max(0.0, tone),
        baseline=latent.baseline,
    )
