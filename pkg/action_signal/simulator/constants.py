"""Generative constants of the synthetic cohort.

Every drift rate, dose curve and noise scale used by the simulator lives in
:class:`SimulatorConstants`; individual entries can be overridden from the
``simulator.constants`` config mapping. Defaults keep scores in range, they
make no claim to physiological fidelity.

The observation model maps the latent state ``(illness, volume_deficit,
tone_deficit)`` to each clinical channel as::

    value = intercept + c_illness * illness + c_volume * volume_deficit
            + c_tone * tone_deficit + noise_sd * N(0, 1)

clamped to ``[low, high]``.
"""

from dataclasses import dataclass, fields, replace
from typing import Dict, NamedTuple, Optional

from action_signal.core.exceptions import ConfigurationError


@dataclass(frozen=True)
class SimulatorConstants:
    """Scalar coefficients of latent dynamics, policy and termination."""

    # Illness drift
    illness_reversion: float = 0.05
    baseline_low: float = 0.0
    baseline_high: float = 6.0
    deficit_coupling: float = 0.02
    illness_noise: float = 0.3

    # Demographic effects on initial and baseline illness
    age_mean: float = 65.0
    age_sd: float = 15.0
    age_effect: float = 0.3
    comorbidity_prevalence: float = 0.3
    comorbidity_effect: float = 0.5
    initial_illness_low: float = 0.5
    initial_illness_high: float = 9.0

    # Deficits
    volume_reversion: float = 0.1
    volume_target: float = 0.3
    tone_reversion: float = 0.1
    tone_target: float = 0.2
    deficit_noise: float = 0.1

    # Treatment effects (all scaled by action_effect_strength)
    treatment_benefit: float = 0.05
    fluid_deficit_effect: float = 0.05
    pressor_deficit_effect: float = 0.05
    overdose_harm: float = 0.5
    overdose_slack: float = 1.0
    fluid_unit: float = 250.0
    pressor_unit: float = 0.1

    # Clinician policy
    iv_baseline: float = 80.0
    iv_per_severity: float = 40.0
    vaso_per_severity: float = 0.03
    vaso_onset: float = 3.0
    sparsity_illness_gate: float = 5.0
    default_severity: float = 4.0

    # Termination
    discharge_illness: float = 0.5
    discharge_hours: int = 6
    death_illness: float = 10.0
    death_hours: int = 3

    # Auxiliary channels beyond the 16 clinical ones
    extra_channel_weight: float = 0.3
    extra_channel_noise: float = 1.0

    ventilation_threshold: float = 6.0

    def with_overrides(self, overrides: Optional[Dict[str, float]]) -> "SimulatorConstants":
        """Copy with entries replaced from a config mapping.

        Raises:
            ConfigurationError: If an override names an unknown constant.
        """
        if not overrides:
            return self
        known = {f.name: f.type for f in fields(self)}
        unknown = sorted(set(overrides) - set(known))
        if unknown:
            raise ConfigurationError(f"Unknown simulator constants: {', '.join(unknown)}")
        cast = {k: (int(v) if known[k] in (int, "int") else float(v)) for k, v in overrides.items()}
        return replace(self, **cast)


class ChannelModel(NamedTuple):
    """Affine observation map of one clinical channel."""

    intercept: float
    c_illness: float
    c_volume: float
    c_tone: float
    noise_sd: float
    low: float
    high: float


# on_mech_vent and vasopressor_rate are derived, not affine
OBSERVATION_MODEL: Dict[str, ChannelModel] = {
    "heart_rate": ChannelModel(72.0, 5.0, 4.0, 0.0, 4.0, 30.0, 200.0),
    "systolic_bp": ChannelModel(118.0, 0.0, -4.0, -7.0, 5.0, 50.0, 220.0),
    "mean_arterial_pressure": ChannelModel(85.0, 0.0, -3.0, -5.0, 4.0, 30.0, 150.0),
    "temperature": ChannelModel(37.0, 0.25, 0.0, 0.0, 0.3, 33.0, 42.0),
    "respiratory_rate": ChannelModel(14.0, 1.5, 0.0, 0.0, 2.0, 4.0, 60.0),
    "paco2": ChannelModel(40.0, -0.8, 0.0, 0.0, 3.0, 15.0, 90.0),
    "pao2": ChannelModel(95.0, -6.0, 0.0, 0.0, 8.0, 30.0, 500.0),
    "fio2": ChannelModel(0.21, 0.05, 0.0, 0.0, 0.0, 0.21, 1.0),
    "wbc": ChannelModel(8.0, 1.2, 0.0, 0.0, 1.5, 0.5, 60.0),
    "platelets": ChannelModel(250.0, -18.0, 0.0, 0.0, 20.0, 5.0, 800.0),
    "bilirubin": ChannelModel(0.6, 0.35, 0.0, 0.0, 0.2, 0.1, 30.0),
    "creatinine": ChannelModel(0.9, 0.25, 0.15, 0.0, 0.15, 0.2, 15.0),
    "gcs": ChannelModel(15.0, -0.8, 0.0, 0.0, 0.7, 3.0, 15.0),
    "urine_output_24h": ChannelModel(1800.0, -140.0, -150.0, 0.0, 150.0, 0.0, 5000.0),
}

# Channels the clinician reads to judge severity
SEVERITY_PROXY_CHANNELS = (
    "temperature",
    "respiratory_rate",
    "pao2",
    "wbc",
    "platelets",
    "bilirubin",
    "gcs",
)

# Values of a latent-zero patient, used to fill channels never observed in training
POPULATION_DEFAULTS: Dict[str, float] = {
    **{name: model.intercept for name, model in OBSERVATION_MODEL.items()},
    "on_mech_vent": 0.0,
    "vasopressor_rate": 0.0,
}


def population_default(channel: str) -> float:
    """Latent-zero value of a channel; auxiliary channels default to 0."""
    return POPULATION_DEFAULTS.get(channel, 0.0)


DEFAULT_CONSTANTS = SimulatorConstants()
