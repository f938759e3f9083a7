"""Synthetic cohort generation.

Every patient owns four random substreams spawned from
``SeedSequence([seed, patient_index])``: initial state, latent noise,
observation noise and policy noise. Results therefore do not depend on how
patients are distributed over worker processes, and a trajectory replayed
under a different action sequence keeps every noise draw.

Hour 0 emits the admission observation. For every later hour ``t`` the dose
``a[t]`` is chosen from the view at ``t - 1``, drives the latent transition
into hour ``t`` and is recorded on row ``t``.
"""

from dataclasses import dataclass
from multiprocessing import Pool
from typing import List, Optional, Sequence, Tuple

import numpy as np

from action_signal.config.schema import SimulatorConfig
from action_signal.data.trajectory import (
    ActionRecord,
    Cohort,
    CohortSchema,
    PatientTrajectory,
    StateObservation,
)
from action_signal.scores.severity import CLINICAL_CHANNELS, score_matrix
from action_signal.simulator.constants import DEFAULT_CONSTANTS, SimulatorConstants
from action_signal.simulator.latent import LatentState, step_latent
from action_signal.simulator.observation import emit_extra_channels, emit_observation, proxy_view
from action_signal.simulator.policy import clinician_policy
from action_signal.utils.logger import logger


@dataclass(frozen=True)
class PatientStreams:
    """Independent random streams of one simulated patient."""

    init: np.random.Generator
    latent: np.random.Generator
    observation: np.random.Generator
    policy: np.random.Generator


def patient_streams(seed: int, index: int) -> PatientStreams:
    root = np.random.SeedSequence([int(seed), int(index)])
    ss_init, ss_latent, ss_obs, ss_policy = root.spawn(4)
    return PatientStreams(
        init=np.random.default_rng(ss_init),
        latent=np.random.default_rng(ss_latent),
        observation=np.random.default_rng(ss_obs),
        policy=np.random.default_rng(ss_policy),
    )


def observation_channels(config: SimulatorConfig) -> Tuple[str, ...]:
    return CLINICAL_CHANNELS + tuple(f"aux_{k + 1}" for k in range(config.extra_channels))


def demographic_channels(config: SimulatorConfig) -> Tuple[str, ...]:
    return ("age", "gender") + tuple(f"comorbidity_{k + 1}" for k in range(config.n_comorbidities))


def cohort_schema(config: SimulatorConfig) -> CohortSchema:
    return CohortSchema(observation_channels(config), demographic_channels(config))


def patient_id(index: int) -> str:
    return f"P{index:06d}"


def draw_demographics(
    rng: np.random.Generator,
    config: SimulatorConfig,
    constants: SimulatorConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Age, gender indicator and comorbidity indicators."""
    age = float(np.clip(rng.normal(constants.age_mean, constants.age_sd), 18.0, 95.0))
    gender = float(rng.random() < 0.5)
    draws = rng.random(config.n_comorbidities)
    comorbidities = (draws < constants.comorbidity_prevalence).astype(np.float64)
    return np.concatenate([[age, gender], comorbidities])


def initial_latent(
    demographics: np.ndarray,
    rng: np.random.Generator,
    constants: SimulatorConstants = DEFAULT_CONSTANTS,
) -> LatentState:
    """Admission latent state; older and comorbid patients start and stay sicker."""
    risk = (
        constants.age_effect * (demographics[0] - constants.age_mean) / constants.age_sd
        + constants.comorbidity_effect * float(np.sum(demographics[2:]))
    )
    illness = rng.uniform(constants.initial_illness_low, constants.initial_illness_high) + risk
    baseline = rng.uniform(constants.baseline_low, constants.baseline_high) + risk
    illness = float(np.clip(illness, 0.0, 10.0))
    scale = rng.uniform(0.5, 1.5, size=2)
    return LatentState(
        illness=illness,
        volume_deficit=constants.volume_target * illness * scale[0],
        tone_deficit=constants.tone_target * illness * scale[1],
        baseline=float(np.clip(baseline, 0.0, 10.0)),
    )


def simulate_patient(
    index: int,
    config: SimulatorConfig,
    constants: Optional[SimulatorConstants] = None,
    action_override: Optional[np.ndarray] = None,
) -> PatientTrajectory:
    """Generate one patient trajectory.

    Args:
        index: Patient index within the cohort (selects the random substreams)
        config: Simulator configuration
        constants: Generative constants; defaults to the table with config overrides
        action_override: Optional (max_hours, 2) doses replacing the policy's
            choices. The policy still draws its noise, so latent and observation
            streams stay aligned with the original run.

    Returns:
        PatientTrajectory with missing-value masks, before imputation
    """
    constants = constants or DEFAULT_CONSTANTS.with_overrides(config.constants)
    streams = patient_streams(config.seed, index)
    demographics = draw_demographics(streams.init, config, constants)
    latent = initial_latent(demographics, streams.init, constants)

    clinical: List[np.ndarray] = []
    extras: List[np.ndarray] = []
    masks: List[np.ndarray] = []
    actions: List[np.ndarray] = []
    view: Optional[np.ndarray] = None
    calm_hours = 0
    crash_hours = 0

    for t in range(config.max_hours):
        if t > 0:
            observed = StateObservation(view, np.isfinite(view))
            action = clinician_policy(observed, latent, config, streams.policy, constants)
            if action_override is not None:
                action = ActionRecord(float(action_override[t, 0]), float(action_override[t, 1]))
            latent = step_latent(latent, action, config, streams.latent, constants)

        state, mask = emit_observation(latent, config, streams.observation, constants)
        extra_values, extra_mask = emit_extra_channels(
            latent, config.extra_channels, config, streams.observation, constants
        )
        values = state.to_vector()
        view = proxy_view(values, view, mask)

        if t == 0:
            observed = StateObservation(view, np.isfinite(view))
            action = clinician_policy(observed, latent, config, streams.policy, constants)
            if action_override is not None:
                action = ActionRecord(float(action_override[0, 0]), float(action_override[0, 1]))

        clinical.append(values)
        extras.append(extra_values)
        masks.append(np.concatenate([mask, extra_mask]))
        actions.append(action.as_array())

        calm_hours = calm_hours + 1 if latent.illness < constants.discharge_illness else 0
        crash_hours = crash_hours + 1 if latent.illness >= constants.death_illness else 0
        if calm_hours >= constants.discharge_hours or crash_hours >= constants.death_hours:
            break

    clinical_values = np.vstack(clinical)
    observed_mask = np.vstack(masks)
    observations = np.where(observed_mask, np.hstack([clinical_values, np.vstack(extras)]), np.nan)
    return PatientTrajectory(
        patient_id=patient_id(index),
        demographics=demographics,
        observations=observations,
        observed_mask=observed_mask,
        actions=np.vstack(actions),
        severity=score_matrix(clinical_values),
    )


def _simulate_indexed(args: Tuple[int, SimulatorConfig, SimulatorConstants]) -> PatientTrajectory:
    index, config, constants = args
    return simulate_patient(index, config, constants)


def simulate_cohort(
    config: SimulatorConfig,
    workers: int = 1,
    indices: Optional[Sequence[int]] = None,
) -> Cohort:
    """Generate a cohort of ``config.n_patients`` trajectories.

    Args:
        config: Simulator configuration
        workers: Worker processes; results are merged by patient index
        indices: Optional subset of patient indices to generate

    Returns:
        Cohort carrying the generator config
    """
    constants = DEFAULT_CONSTANTS.with_overrides(config.constants)
    indices = list(range(config.n_patients)) if indices is None else list(indices)
    tasks = [(i, config, constants) for i in indices]

    logger.info(f"Simulating {len(tasks)} patients (seed={config.seed}, workers={workers})")
    if workers > 1 and len(tasks) > 1:
        chunksize = max(1, len(tasks) // (workers * 4))
        with Pool(processes=workers) as pool:
            trajectories = pool.map(_simulate_indexed, tasks, chunksize=chunksize)
    else:
        trajectories = [_simulate_indexed(task) for task in tasks]

    cohort = Cohort(cohort_schema(config), tuple(trajectories), config.to_dict())
    logger.info(f"Simulated {len(cohort)} patients, {cohort.total_steps} hourly steps")
    return cohort
