"""Observation model: latent state to noisy, partially missing clinical channels."""

from typing import Optional, Tuple

import numpy as np

from action_signal.config.schema import SimulatorConfig
from action_signal.scores.severity import CLINICAL_CHANNELS, RawClinicalState
from action_signal.simulator.constants import (
    DEFAULT_CONSTANTS,
    OBSERVATION_MODEL,
    SEVERITY_PROXY_CHANNELS,
    SimulatorConstants,
)
from action_signal.simulator.latent import LatentState

_AFFINE = tuple(OBSERVATION_MODEL.items())
_PROXY_COLUMNS = np.array([CLINICAL_CHANNELS.index(name) for name in SEVERITY_PROXY_CHANNELS])
_PROXY_INTERCEPT = np.array([OBSERVATION_MODEL[name].intercept for name in SEVERITY_PROXY_CHANNELS])
_PROXY_SLOPE = np.array([OBSERVATION_MODEL[name].c_illness for name in SEVERITY_PROXY_CHANNELS])


def observed_severity(
    values: np.ndarray, constants: SimulatorConstants = DEFAULT_CONSTANTS
) -> float:
    """Illness estimate a clinician reads off the proxy channels.

    Each proxy channel is inverted through its affine map and clipped to
    [0, 10]; the estimate is the mean over channels with a finite value.

    Args:
        values: Clinical channel vector, ordered as ``CLINICAL_CHANNELS``;
            NaN marks channels with no value available

    Returns:
        Severity estimate in illness units
    """
    proxies = np.asarray(values, dtype=np.float64)[_PROXY_COLUMNS]
    available = np.isfinite(proxies)
    if not available.any():
        return constants.default_severity
    raw = (proxies[available] - _PROXY_INTERCEPT[available]) / _PROXY_SLOPE[available]
    estimates = np.clip(raw, 0.0, 10.0)
    return float(np.mean(estimates))


def indicated_vasopressor_rate(
    severity: float, constants: SimulatorConstants = DEFAULT_CONSTANTS
) -> float:
    """Norepinephrine-equivalent rate the observed severity calls for."""
    return constants.vaso_per_severity * max(0.0, severity - constants.vaso_onset)


def emit_observation(
    latent: LatentState,
    config: SimulatorConfig,
    rng: np.random.Generator,
    constants: SimulatorConstants = DEFAULT_CONSTANTS,
) -> Tuple[RawClinicalState, np.ndarray]:
    """Draw one hour of clinical channels.

    Affine channels get Gaussian noise and are clamped to their physiological
    range, GCS is rounded, ventilation follows the illness threshold and the
    vasopressor-rate channel records the rate indicated by the observed
    severity. Each channel is then independently marked missing with
    probability ``missingness_rate``.

    Returns:
        Tuple of (RawClinicalState, observed_mask over the 16 clinical channels)
    """
    noise = rng.standard_normal(len(_AFFINE)) * config.noise_scale
    missing_draw = rng.random(len(CLINICAL_CHANNELS))

    values = {}
    for (name, model), eps in zip(_AFFINE, noise):
        raw = (
            model.intercept
            + model.c_illness * latent.illness
            + model.c_volume * latent.volume_deficit
            + model.c_tone * latent.tone_deficit
            + model.noise_sd * eps
        )
        values[name] = float(np.clip(raw, model.low, model.high))
    values["gcs"] = float(np.round(values["gcs"]))
    values["on_mech_vent"] = bool(latent.illness >= constants.ventilation_threshold)

    vector = np.array([float(values.get(name, np.nan)) for name in CLINICAL_CHANNELS])
    severity = observed_severity(vector, constants)
    values["vasopressor_rate"] = indicated_vasopressor_rate(severity, constants)

    state = RawClinicalState(**{name: values[name] for name in CLINICAL_CHANNELS})
    return state, missing_draw >= config.missingness_rate


def emit_extra_channels(
    latent: LatentState,
    n_channels: int,
    config: SimulatorConfig,
    rng: np.random.Generator,
    constants: SimulatorConstants = DEFAULT_CONSTANTS,
) -> Tuple[np.ndarray, np.ndarray]:
    """Auxiliary channels weakly tied to illness, with their own missingness."""
    if n_channels == 0:
        return np.empty(0), np.empty(0, dtype=bool)
    noise = rng.standard_normal(n_channels) * config.noise_scale
    missing_draw = rng.random(n_channels)
    values = constants.extra_channel_weight * latent.illness + constants.extra_channel_noise * noise
    return values, missing_draw >= config.missingness_rate


def proxy_view(values: np.ndarray, previous: Optional[np.ndarray], mask: np.ndarray) -> np.ndarray:
    """Carry the last measured value of each channel forward.

    Returns:
        Channel vector with fresh measurements where ``mask`` is true, the
        previous view elsewhere (NaN if the channel was never measured)
    """
    if previous is None:
        previous = np.full(len(values), np.nan)
    return np.where(mask, values, previous)
