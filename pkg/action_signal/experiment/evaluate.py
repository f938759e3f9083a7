"""RMSE of dynamics predictions under action substitutions."""

from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np

from action_signal.core.exceptions import NormalizationMismatchError
from action_signal.data.normalization import NormalizationStats
from action_signal.experiment.conditions import EvalCondition
from action_signal.experiment.perturb import perturb_actions
from action_signal.nn.model import DynamicsModel
from action_signal.preprocessing.dataset import ModelDataset

# Seeds the Shuffled permutation of a cell: [SHUFFLE_STREAM, cell seed]
SHUFFLE_STREAM = 7919


def rmse(predictions: np.ndarray, targets: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(predictions) - np.asarray(targets)) ** 2)))


@dataclass
class ConditionEvaluation:
    """Predictions of one model under one condition."""

    condition: str
    rmse: float
    predictions: np.ndarray
    targets: np.ndarray


def _check_fingerprints(
    model: DynamicsModel, records: ModelDataset, stats: Optional[NormalizationStats]
) -> None:
    fingerprints = {records.stats_fingerprint}
    if model.stats_fingerprint:
        fingerprints.add(model.stats_fingerprint)
    if stats is not None:
        fingerprints.add(stats.fingerprint())
    if len(fingerprints) != 1:
        raise NormalizationMismatchError("normalization mismatch")


def evaluate_condition(
    model: DynamicsModel,
    records: ModelDataset,
    condition: Union[str, EvalCondition],
    stats: NormalizationStats,
    rng: Optional[np.random.Generator] = None,
    per_trajectory: bool = False,
) -> ConditionEvaluation:
    """Predict on substituted test records and score against the true deltas.

    Raises:
        NormalizationMismatchError: If model, records and stats disagree on
            the normalization fingerprint.
    """
    _check_fingerprints(model, records, stats)
    condition = EvalCondition(condition)
    perturbed = perturb_actions(records, condition, stats, rng, per_trajectory)
    predictions = model.predict(perturbed)
    return ConditionEvaluation(
        condition=condition.value,
        rmse=rmse(predictions, records.target),
        predictions=predictions,
        targets=records.target,
    )


def evaluate_rmse(
    model: DynamicsModel,
    records: ModelDataset,
    condition: Union[str, EvalCondition],
    stats: NormalizationStats,
    rng: Optional[np.random.Generator] = None,
    per_trajectory: bool = False,
) -> float:
    """sqrt(mean((prediction − target)²)) over every record, in z-units."""
    return evaluate_condition(model, records, condition, stats, rng, per_trajectory).rmse


def evaluate_all_conditions(
    model: DynamicsModel,
    records: ModelDataset,
    stats: NormalizationStats,
    seed: int,
    per_trajectory: bool = False,
) -> Dict[str, ConditionEvaluation]:
    """Evaluate the four conditions in canonical order."""
    return {
        condition.value: evaluate_condition(
            model,
            records,
            condition,
            stats,
            rng=np.random.default_rng([SHUFFLE_STREAM, seed]),
            per_trajectory=per_trajectory,
        )
        for condition in EvalCondition
    }
