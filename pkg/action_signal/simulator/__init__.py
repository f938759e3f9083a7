"""Synthetic sepsis cohort simulator."""

from action_signal.simulator.constants import (
    DEFAULT_CONSTANTS,
    SimulatorConstants,
    population_default,
)
from action_signal.simulator.latent import LatentState, step_latent
from action_signal.simulator.observation import emit_observation, observed_severity
from action_signal.simulator.policy import clinician_policy
from action_signal.simulator.cohort import simulate_cohort, simulate_patient, cohort_schema
from action_signal.simulator.events import cohort_to_events, write_events, read_events

__all__ = [
    "SimulatorConstants",
    "DEFAULT_CONSTANTS",
    "population_default",
    "LatentState",
    "step_latent",
    "emit_observation",
    "observed_severity",
    "clinician_policy",
    "simulate_cohort",
    "simulate_patient",
    "cohort_schema",
    "cohort_to_events",
    "write_events",
    "read_events",
]
