"""Patient trajectory data model.

A trajectory is stored column-wise (one array per field, one row per ICU hour)
and exposes the per-hour ``(StateObservation, ActionRecord, SeveritySnapshot)``
view through :attr:`PatientTrajectory.steps`. All arrays are frozen after
construction so trajectories can be shared read-only between workers.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from action_signal.core.exceptions import DataValidationError

ACTION_CHANNELS = ("iv_fluid", "vasopressor")
SEVERITY_METRICS = ("SOFA", "SIRS", "ShockIndex")
MAX_TRAJECTORY_HOURS = 336

SOFA_RANGE = (0, 24)
SIRS_RANGE = (0, 4)


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StateObservation:
    """Observation channels of one hour (s_t)."""

    observed: np.ndarray
    observed_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "observed", _frozen(self.observed, np.float64))
        object.__setattr__(self, "observed_mask", _frozen(self.observed_mask, bool))
        if self.observed.shape != self.observed_mask.shape or self.observed.ndim != 1:
            raise DataValidationError("observed and observed_mask must be vectors of equal length")
        if not np.all(np.isfinite(self.observed[self.observed_mask])):
            raise DataValidationError("measured observation values must be finite")


@dataclass(frozen=True)
class Demographics:
    """Static patient covariates: age, gender indicator, comorbidity indicators."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        if self.values.ndim != 1 or not np.all(np.isfinite(self.values)):
            raise DataValidationError("demographics must be a finite vector")
        indicators = self.values[1:]
        if not np.all((indicators == 0.0) | (indicators == 1.0)):
            raise DataValidationError("demographic indicator entries must be 0 or 1")


@dataclass(frozen=True)
class ActionRecord:
    """Treatment of one hour (a_t): IV fluid in mL/h, vasopressor in ug/kg/min."""

    iv_fluid: float
    vasopressor: float

    def __post_init__(self):
        for name in ACTION_CHANNELS:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise DataValidationError(f"{name} dose must be finite and >= 0, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array([self.iv_fluid, self.vasopressor], dtype=np.float64)


@dataclass(frozen=True)
class SeveritySnapshot:
    """Disease severity of one hour (y_t)."""

    sofa: int
    sirs: int
    shock_index: float

    def __post_init__(self):
        if not SOFA_RANGE[0] <= self.sofa <= SOFA_RANGE[1]:
            raise DataValidationError(f"SOFA out of range: {self.sofa}")
        if not SIRS_RANGE[0] <= self.sirs <= SIRS_RANGE[1]:
            raise DataValidationError(f"SIRS out of range: {self.sirs}")
        if not np.isfinite(self.shock_index) or self.shock_index <= 0:
            raise DataValidationError(
                f"Shock Index must be finite and positive: {self.shock_index}"
            )

    def value(self, metric: str) -> float:
        """Severity value for a metric name."""
        return float((self.sofa, self.sirs, self.shock_index)[SEVERITY_METRICS.index(metric)])

    def as_array(self) -> np.ndarray:
        return np.array([self.sofa, self.sirs, self.shock_index], dtype=np.float64)


class TrajectoryStep(NamedTuple):
    """One hour of a trajectory."""

    observation: StateObservation
    action: ActionRecord
    severity: SeveritySnapshot


@dataclass(frozen=True)
class CohortSchema:
    """Channel names shared by every trajectory of a cohort."""

    observation_channels: Tuple[str, ...]
    demographic_channels: Tuple[str, ...]

    @property
    def n_observations(self) -> int:
        return len(self.observation_channels)

    @property
    def n_demographics(self) -> int:
        return len(self.demographic_channels)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "observation_channels": list(self.observation_channels),
            "demographic_channels": list(self.demographic_channels),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CohortSchema":
        return cls(
            observation_channels=tuple(data["observation_channels"]),
            demographic_channels=tuple(data["demographic_channels"]),
        )


@dataclass(frozen=True)
class PatientTrajectory:
    """Hourly sequence of observations, actions and severity for one patient.

    Attributes:
        patient_id: Opaque identifier
        demographics: (n_demographics,) vector
        observations: (T, n_obs) raw clinical units; NaN where not measured
            before imputation
        observed_mask: (T, n_obs) True where the channel was measured that hour
        actions: (T, 2) IV fluid and vasopressor doses
        severity: (T, 3) SOFA, SIRS and Shock Index
    """

    patient_id: str
    demographics: np.ndarray
    observations: np.ndarray
    observed_mask: np.ndarray
    actions: np.ndarray
    severity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "patient_id", str(self.patient_id))
        object.__setattr__(self, "demographics", _frozen(self.demographics, np.float64))
        object.__setattr__(self, "observations", _frozen(self.observations, np.float64))
        object.__setattr__(self, "observed_mask", _frozen(self.observed_mask, bool))
        object.__setattr__(self, "actions", _frozen(self.actions, np.float64))
        object.__setattr__(self, "severity", _frozen(self.severity, np.float64))

        n_steps = self.observations.shape[0]
        if self.observations.ndim != 2 or n_steps < 1:
            raise DataValidationError(
                f"{self.patient_id}: observations must be a non-empty (T, C) array"
            )
        if self.observed_mask.shape != self.observations.shape:
            raise DataValidationError(f"{self.patient_id}: observed_mask shape mismatch")
        if self.actions.shape != (n_steps, len(ACTION_CHANNELS)):
            raise DataValidationError(f"{self.patient_id}: actions must have shape (T, 2)")
        if self.severity.shape != (n_steps, len(SEVERITY_METRICS)):
            raise DataValidationError(f"{self.patient_id}: severity must have shape (T, 3)")
        if not np.all(np.isfinite(self.actions)) or np.any(self.actions < 0):
            raise DataValidationError(f"{self.patient_id}: doses must be finite and >= 0")
        if not np.all(np.isfinite(self.observations[self.observed_mask])):
            raise DataValidationError(f"{self.patient_id}: measured values must be finite")

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def length(self) -> int:
        return len(self)

    @property
    def is_complete(self) -> bool:
        """True when every observation value is present (post-imputation)."""
        return bool(np.all(np.isfinite(self.observations)))

    @property
    def steps(self) -> Tuple[TrajectoryStep, ...]:
        """Per-hour typed view of the trajectory."""
        return tuple(self.step(t) for t in range(len(self)))

    def step(self, t: int) -> TrajectoryStep:
        sofa, sirs, shock_index = self.severity[t]
        return TrajectoryStep(
            observation=StateObservation(self.observations[t], self.observed_mask[t]),
            action=ActionRecord(float(self.actions[t, 0]), float(self.actions[t, 1])),
            severity=SeveritySnapshot(int(sofa), int(sirs), float(shock_index)),
        )

    def metric_series(self, metric: str) -> np.ndarray:
        """Severity values of one metric over time."""
        return self.severity[:, SEVERITY_METRICS.index(metric)]

    def with_observations(self, observations: np.ndarray) -> "PatientTrajectory":
        """Copy with replaced observation values; the original mask is kept for audit."""
        return replace(self, observations=observations)

    def validate_preprocessed(self) -> None:
        """Check the post-preprocessing invariants.

        Raises:
            DataValidationError: On missing values, bad length or out-of-range scores.
        """
        if not 1 <= len(self) <= MAX_TRAJECTORY_HOURS:
            raise DataValidationError(
                f"{self.patient_id}: length {len(self)} outside [1, {MAX_TRAJECTORY_HOURS}]"
            )
        if not self.is_complete:
            raise DataValidationError(f"{self.patient_id}: missing values remain after imputation")
        sofa, sirs, shock_index = self.severity.T
        bad_sofa = (sofa < SOFA_RANGE[0]) | (sofa > SOFA_RANGE[1]) | (sofa != np.round(sofa))
        if np.any(bad_sofa):
            raise DataValidationError(f"{self.patient_id}: SOFA outside [0, 24]")
        bad_sirs = (sirs < SIRS_RANGE[0]) | (sirs > SIRS_RANGE[1]) | (sirs != np.round(sirs))
        if np.any(bad_sirs):
            raise DataValidationError(f"{self.patient_id}: SIRS outside [0, 4]")
        if not np.all(np.isfinite(shock_index)) or np.any(shock_index <= 0):
            raise DataValidationError(f"{self.patient_id}: Shock Index must be finite and positive")


@dataclass(frozen=True)
class Cohort:
    """A collection of trajectories sharing one channel schema."""

    schema: CohortSchema
    trajectories: Tuple[PatientTrajectory, ...]
    generator_config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        for traj in self.trajectories:
            if traj.observations.shape[1] != self.schema.n_observations:
                raise DataValidationError(
                    f"{traj.patient_id}: channel count does not match cohort schema"
                )
            if traj.demographics.shape[0] != self.schema.n_demographics:
                raise DataValidationError(
                    f"{traj.patient_id}: demographics length does not match schema"
                )

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[PatientTrajectory]:
        return iter(self.trajectories)

    @property
    def patient_ids(self) -> List[str]:
        return [t.patient_id for t in self.trajectories]

    @property
    def total_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def with_trajectories(self, trajectories: Sequence[PatientTrajectory]) -> "Cohort":
        """Same schema and generator config, different members."""
        return Cohort(self.schema, tuple(trajectories), dict(self.generator_config))

    def subset(self, patient_ids: Sequence[str]) -> "Cohort":
        """Members with the given ids, in the given order."""
        by_id = {t.patient_id: t for t in self.trajectories}
        return self.with_trajectories([by_id[pid] for pid in patient_ids])

    def get(self, patient_id: str) -> Optional[PatientTrajectory]:
        for traj in self.trajectories:
            if traj.patient_id == patient_id:
                return traj
        return None
