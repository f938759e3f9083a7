"""Missing-value imputation.

The default :class:`LocfImputer` carries the last observation forward within
each trajectory and fills leading gaps with training-split channel means.
Any object following the :class:`Imputer` protocol can replace it.
"""

from typing import Dict, List, Optional, Protocol, Sequence

import numpy as np

from action_signal.core.exceptions import DataValidationError
from action_signal.data.trajectory import PatientTrajectory
from action_signal.simulator.constants import population_default
from action_signal.utils.logger import logger


class Imputer(Protocol):
    """Fits fill statistics on a training split and completes trajectories."""

    def fit(self, train_split: Sequence[PatientTrajectory], channels: Sequence[str]) -> "Imputer":
        ...

    def transform(self, trajectory: PatientTrajectory) -> PatientTrajectory:
        ...


def forward_fill(values: np.ndarray) -> np.ndarray:
    """Carry the last finite value of each column forward; leading NaNs stay."""
    values = np.array(values, dtype=np.float64, copy=True)
    n_steps = values.shape[0]
    finite = np.isfinite(values)
    last = np.where(finite, np.arange(n_steps)[:, None], -1)
    np.maximum.accumulate(last, axis=0, out=last)
    cols = np.broadcast_to(np.arange(values.shape[1]), values.shape)
    filled = values[np.maximum(last, 0), cols]
    return np.where(last >= 0, filled, np.nan)


class LocfImputer:
    """Last observation carried forward, training-split means for leading gaps."""

    def __init__(self, defaults: Optional[Dict[str, float]] = None):
        """Initialize imputer.

        Args:
            defaults: Fill values for channels never observed in the training
                split; the simulator's population defaults when None
        """
        self.defaults = defaults
        self.channels: List[str] = []
        self.fill_values: Optional[np.ndarray] = None
        self.warnings: List[str] = []

    def fit(
        self, train_split: Sequence[PatientTrajectory], channels: Sequence[str]
    ) -> "LocfImputer":
        """Compute per-channel means over measured training values.

        Raises:
            DataValidationError: If the training split is empty.
        """
        if len(train_split) == 0:
            raise DataValidationError("empty training split")
        self.channels = list(channels)
        values = np.concatenate([t.observations for t in train_split], axis=0)
        measured = np.isfinite(values)
        counts = measured.sum(axis=0)
        sums = np.where(measured, values, 0.0).sum(axis=0)

        fill = np.empty(len(self.channels))
        self.warnings = []
        for j, name in enumerate(self.channels):
            if counts[j] > 0:
                fill[j] = sums[j] / counts[j]
            else:
                default = (self.defaults or {}).get(name, population_default(name))
                fill[j] = default
                message = (
                    f"channel {name} has no training observations, filled with default {default}"
                )
                self.warnings.append(message)
                logger.warning(message)
        self.fill_values = fill
        return self

    def transform(self, trajectory: PatientTrajectory) -> PatientTrajectory:
        """Complete one trajectory; the original mask is kept for audit."""
        if self.fill_values is None:
            raise DataValidationError("imputer has not been fitted")
        if trajectory.is_complete:
            return trajectory
        filled = forward_fill(trajectory.observations)
        filled = np.where(np.isfinite(filled), filled, self.fill_values[None, :])
        return trajectory.with_observations(filled)


def impute_missing(
    trajectories: Sequence[PatientTrajectory], imputer: Imputer
) -> List[PatientTrajectory]:
    """Apply a fitted imputer to every trajectory.

    Returns:
        Complete trajectories in input order
    """
    completed = [imputer.transform(t) for t in trajectories]
    for traj in completed:
        if not traj.is_complete:
            raise DataValidationError(f"{traj.patient_id}: imputer left missing values")
    return completed
