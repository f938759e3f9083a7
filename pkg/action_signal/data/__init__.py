"""Trajectory data model, normalization, splitting and cohort files."""

from action_signal.data.trajectory import (
    ACTION_CHANNELS,
    SEVERITY_METRICS,
    MAX_TRAJECTORY_HOURS,
    StateObservation,
    Demographics,
    ActionRecord,
    SeveritySnapshot,
    TrajectoryStep,
    CohortSchema,
    PatientTrajectory,
    Cohort,
)
from action_signal.data.normalization import (
    ChannelStats,
    NormalizationStats,
    fit_normalization,
    apply_normalization,
    invert_normalization,
    obs_channel,
    demo_channel,
    action_channel,
    delta_channel,
)
from action_signal.data.split import split_cohort
from action_signal.data.cohort_io import read_cohort, write_cohort

__all__ = [
    "ACTION_CHANNELS",
    "SEVERITY_METRICS",
    "MAX_TRAJECTORY_HOURS",
    "StateObservation",
    "Demographics",
    "ActionRecord",
    "SeveritySnapshot",
    "TrajectoryStep",
    "CohortSchema",
    "PatientTrajectory",
    "Cohort",
    "ChannelStats",
    "NormalizationStats",
    "fit_normalization",
    "apply_normalization",
    "invert_normalization",
    "obs_channel",
    "demo_channel",
    "action_channel",
    "delta_channel",
    "split_cohort",
    "read_cohort",
    "write_cohort",
]
