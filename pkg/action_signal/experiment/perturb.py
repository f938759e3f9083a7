"""Test-time substitutions of the future action tensors."""

from typing import Optional, Union

import numpy as np

from action_signal.data.normalization import NormalizationStats
from action_signal.experiment.conditions import EvalCondition
from action_signal.preprocessing.dataset import ModelDataset


def shuffle_action_vectors(actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Permute every per-hour (fluid, vasopressor) vector across all records."""
    flat = actions.reshape(-1, actions.shape[-1])
    return flat[rng.permutation(flat.shape[0])].reshape(actions.shape)


def shuffle_within_trajectories(records: ModelDataset, rng: np.random.Generator) -> np.ndarray:
    """Future actions read from a per-patient permutation of each trajectory's hours."""
    split = records.split
    order = np.empty(split.offsets[-1], dtype=np.int64)
    for start, end in zip(split.offsets[:-1], split.offsets[1:]):
        order[start:end] = start + rng.permutation(end - start)
    rows = (
        split.offsets[records.record_patient][:, None]
        + records.record_anchor[:, None]
        + 1
        + np.arange(records.horizon)[None, :]
    )
    return split.actions[order[rows]]


def perturb_actions(
    records: ModelDataset,
    condition: Union[str, EvalCondition],
    stats: NormalizationStats,
    rng: Optional[np.random.Generator] = None,
    per_trajectory: bool = False,
) -> ModelDataset:
    """Replace the future actions of test records according to a condition.

    * True keeps the records as they are.
    * Zero uses a raw zero dose pushed through log(1 + x) and z-scaling.
    * Shuffled permutes real per-hour action vectors uniformly across the
      records, both drugs moving together; ``per_trajectory`` permutes hours
      within each patient instead.
    * Mean uses the training mean, the zero vector in z-space.

    Args:
        records: Test records carrying true z-scaled actions
        condition: Evaluation condition
        stats: Training-split normalization statistics
        rng: Generator for the Shuffled permutation

    Returns:
        ModelDataset with substituted actions
    """
    condition = EvalCondition(condition)
    if condition is EvalCondition.TRUE:
        return records
    if condition is EvalCondition.ZERO:
        zero = np.broadcast_to(stats.zero_dose_z(), records.actions.shape)
        return records.with_actions(zero.copy())
    if condition is EvalCondition.MEAN:
        return records.with_actions(np.zeros_like(records.actions))

    if rng is None:
        rng = np.random.default_rng(0)
    if per_trajectory:
        return records.with_actions(shuffle_within_trajectories(records, rng))
    return records.with_actions(shuffle_action_vectors(records.actions, rng))
