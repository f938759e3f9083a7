"""Model-ready datasets.

A :class:`PreparedSplit` holds the z-scaled arrays of one split with every
trajectory concatenated along the time axis. Datasets only store record
coordinates ``(patient, anchor hour)`` plus targets and gather state history
windows on demand:

* history: the ``context_length`` hours ending at the anchor, left-padded with
  zeros and a validity mask,
* future actions: the doses recorded on hours ``t + 1 ... t + h``.
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from action_signal.core.exceptions import (
    DataValidationError,
    EmptyDatasetError,
    NormalizationMismatchError,
    ShapeMismatchError,
)
from action_signal.data.normalization import NormalizationStats
from action_signal.data.trajectory import SEVERITY_METRICS, PatientTrajectory
from action_signal.experiment.conditions import TrainingScheme
from action_signal.nn.tensorfile import load_tensors, save_tensors

BC_HORIZON = 6

PathLike = Union[str, Path]


@dataclass(frozen=True)
class PreparedSplit:
    """z-scaled, imputed arrays of one split.

    Attributes:
        name: Split name (train, val or test)
        patient_ids: Patient order
        offsets: (P + 1,) start row of each patient in the step arrays
        states: (S, C) z-scaled observations
        demographics: (P, D) z-scaled demographics
        actions: (S, 2) z-scaled log doses
        severity: (S, 3) raw SOFA, SIRS and Shock Index
        stats_fingerprint: Fingerprint of the statistics used for scaling
    """

    name: str
    patient_ids: Tuple[str, ...]
    offsets: np.ndarray
    states: np.ndarray
    demographics: np.ndarray
    actions: np.ndarray
    severity: np.ndarray
    stats_fingerprint: str

    @classmethod
    def from_trajectories(
        cls, name: str, trajectories: Sequence[PatientTrajectory], stats: NormalizationStats
    ) -> "PreparedSplit":
        """Scale complete trajectories with training statistics."""
        if len(trajectories) == 0:
            raise EmptyDatasetError(f"split {name} has no patients")
        for traj in trajectories:
            if not traj.is_complete:
                raise DataValidationError(
                    f"{traj.patient_id}: trajectory must be imputed before scaling"
                )
        lengths = np.array([len(t) for t in trajectories], dtype=np.int64)
        return cls(
            name=name,
            patient_ids=tuple(t.patient_id for t in trajectories),
            offsets=np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64),
            states=stats.normalize_observations(
                np.concatenate([t.observations for t in trajectories])
            ),
            demographics=stats.normalize_demographics(
                np.stack([t.demographics for t in trajectories])
            ),
            actions=stats.normalize_actions(np.concatenate([t.actions for t in trajectories])),
            severity=np.concatenate([t.severity for t in trajectories]),
            stats_fingerprint=stats.fingerprint(),
        )

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def n_patients(self) -> int:
        return len(self.patient_ids)

    @property
    def n_channels(self) -> int:
        return self.states.shape[1]

    @property
    def n_demographics(self) -> int:
        return self.demographics.shape[1]

    def save(self, path: PathLike) -> Path:
        return save_tensors(
            path,
            {
                "offsets": self.offsets,
                "states": self.states,
                "demographics": self.demographics,
                "actions": self.actions,
                "severity": self.severity,
            },
            {
                "name": self.name,
                "patient_ids": list(self.patient_ids),
                "stats_fingerprint": self.stats_fingerprint,
            },
        )

    @classmethod
    def load(cls, path: PathLike) -> "PreparedSplit":
        tensors, meta = load_tensors(path)
        return cls(
            name=meta["name"],
            patient_ids=tuple(meta["patient_ids"]),
            offsets=tensors["offsets"],
            states=tensors["states"],
            demographics=tensors["demographics"],
            actions=tensors["actions"],
            severity=tensors["severity"],
            stats_fingerprint=meta["stats_fingerprint"],
        )


def gather_history(
    split: PreparedSplit, patients: np.ndarray, anchors: np.ndarray, context_length: int
) -> Tuple[np.ndarray, np.ndarray]:
    """State windows ending at each anchor.

    Returns:
        Tuple of (states (B, L, C) zero-padded on the left, valid (B, L))
    """
    positions = anchors[:, None] - (context_length - 1) + np.arange(context_length)[None, :]
    valid = positions >= 0
    rows = split.offsets[patients][:, None] + np.maximum(positions, 0)
    states = split.states[rows] * valid[..., None]
    return states, valid


@dataclass(frozen=True)
class ModelBatch:
    """Inputs and targets of a minibatch of dynamics records."""

    states: np.ndarray  # (B, L, C)
    valid: np.ndarray  # (B, L)
    demographics: np.ndarray  # (B, D)
    actions: np.ndarray  # (B, h, 2)
    target: np.ndarray  # (B,)
    current_state: np.ndarray  # (B, C)
    terminal: np.ndarray  # (B,)
    adj_partner: np.ndarray  # (B,) window position of the adjacency partner
    adj_label: np.ndarray  # (B,)
    adj_weight: np.ndarray  # (B,)

    def __len__(self) -> int:
        return self.target.shape[0]


def apply_scheme(
    batch: ModelBatch, scheme: Union[str, TrainingScheme], keep_demographics: bool = False
) -> ModelBatch:
    """Neutralize the inputs a training scheme does not see.

    StatesOnly replaces every future action by the training mean (the zero
    vector in z-space); ActionsOnly zeroes the state history and, unless
    ``keep_demographics``, the demographics.
    """
    scheme = TrainingScheme(scheme)
    if scheme is TrainingScheme.STATES_ONLY:
        return replace(batch, actions=np.zeros_like(batch.actions))
    if scheme is TrainingScheme.ACTIONS_ONLY:
        demographics = batch.demographics
        if not keep_demographics:
            demographics = np.zeros_like(batch.demographics)
        return replace(batch, states=np.zeros_like(batch.states), demographics=demographics)
    return batch


def _record_coordinates(split: PreparedSplit, horizon: int) -> Tuple[np.ndarray, np.ndarray]:
    counts = np.maximum(split.lengths - horizon, 0)
    patients = np.repeat(np.arange(split.n_patients), counts)
    if counts.sum():
        anchors = np.concatenate([np.arange(c) for c in counts])
    else:
        anchors = np.empty(0, dtype=np.int64)
    return patients.astype(np.int64), anchors.astype(np.int64)


def _future_actions(
    split: PreparedSplit, patients: np.ndarray, anchors: np.ndarray, horizon: int
) -> np.ndarray:
    rows = split.offsets[patients][:, None] + anchors[:, None] + 1 + np.arange(horizon)[None, :]
    return split.actions[rows]


@dataclass(frozen=True)
class ModelDataset:
    """Dynamics records of one split for a (metric, horizon) pair.

    ``actions`` holds the true future actions unless replaced by a test-time
    perturbation; the training scheme is applied when batches are drawn.
    """

    split: PreparedSplit
    metric: str
    horizon: int
    scheme: str
    context_length: int
    record_patient: np.ndarray
    record_anchor: np.ndarray
    target: np.ndarray
    terminal: np.ndarray
    adj_partner: np.ndarray
    adj_label: np.ndarray
    adj_weight: np.ndarray
    actions: np.ndarray
    keep_demographics: bool = False

    def __len__(self) -> int:
        return self.record_patient.shape[0]

    @property
    def stats_fingerprint(self) -> str:
        return self.split.stats_fingerprint

    def batch(self, indices: Optional[np.ndarray] = None) -> ModelBatch:
        """Materialize records as a scheme-masked batch."""
        if indices is None:
            indices = np.arange(len(self))
        indices = np.asarray(indices, dtype=np.int64)
        patients = self.record_patient[indices]
        anchors = self.record_anchor[indices]
        states, valid = gather_history(self.split, patients, anchors, self.context_length)
        batch = ModelBatch(
            states=states,
            valid=valid,
            demographics=self.split.demographics[patients],
            actions=self.actions[indices],
            target=self.target[indices],
            current_state=self.split.states[self.split.offsets[patients] + anchors],
            terminal=self.terminal[indices],
            adj_partner=self.adj_partner[indices],
            adj_label=self.adj_label[indices],
            adj_weight=self.adj_weight[indices],
        )
        return apply_scheme(batch, self.scheme, self.keep_demographics)

    def with_scheme(self, scheme: Union[str, TrainingScheme]) -> "ModelDataset":
        return replace(self, scheme=TrainingScheme(scheme).value)

    def with_actions(self, actions: np.ndarray) -> "ModelDataset":
        """Copy with substituted future actions.

        Raises:
            ShapeMismatchError: If the shape differs from the current actions.
        """
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != self.actions.shape:
            raise ShapeMismatchError(
                f"action tensor shape mismatch: {actions.shape} != {self.actions.shape}"
            )
        return replace(self, actions=actions)

    def subset(self, indices: np.ndarray) -> "ModelDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            record_patient=self.record_patient[indices],
            record_anchor=self.record_anchor[indices],
            target=self.target[indices],
            terminal=self.terminal[indices],
            adj_partner=self.adj_partner[indices],
            adj_label=self.adj_label[indices],
            adj_weight=self.adj_weight[indices],
            actions=self.actions[indices],
        )

    def save(self, path: PathLike) -> Path:
        """Write the record arrays; the split is stored separately."""
        return save_tensors(
            path,
            {
                "record_patient": self.record_patient,
                "record_anchor": self.record_anchor,
                "target": self.target,
                "terminal": self.terminal,
                "adj_partner": self.adj_partner,
                "adj_label": self.adj_label,
                "adj_weight": self.adj_weight,
            },
            {
                "record_count": len(self),
                "split": self.split.name,
                "metric": self.metric,
                "horizon": self.horizon,
                "context_length": self.context_length,
                "stats_fingerprint": self.stats_fingerprint,
                "state_shape": [self.context_length, self.split.n_channels],
                "action_shape": [self.horizon, 2],
            },
        )

    @classmethod
    def load(
        cls,
        path: PathLike,
        split: PreparedSplit,
        scheme: Union[str, TrainingScheme] = TrainingScheme.STATES_AND_ACTIONS,
        keep_demographics: bool = False,
    ) -> "ModelDataset":
        """Read records written by :meth:`save` against their split.

        Raises:
            NormalizationMismatchError: If the split was scaled with other statistics.
        """
        tensors, meta = load_tensors(path)
        if meta["stats_fingerprint"] != split.stats_fingerprint:
            raise NormalizationMismatchError("normalization mismatch")
        horizon = int(meta["horizon"])
        return cls(
            split=split,
            metric=meta["metric"],
            horizon=horizon,
            scheme=TrainingScheme(scheme).value,
            context_length=int(meta["context_length"]),
            record_patient=tensors["record_patient"],
            record_anchor=tensors["record_anchor"],
            target=tensors["target"],
            terminal=tensors["terminal"],
            adj_partner=tensors["adj_partner"],
            adj_label=tensors["adj_label"],
            adj_weight=tensors["adj_weight"],
            actions=_future_actions(
                split, tensors["record_patient"], tensors["record_anchor"], horizon
            ),
            keep_demographics=keep_demographics,
        )


def sample_adjacency_pairs(
    anchors: np.ndarray, context_length: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw one adjacency pair per record inside its history window.

    Positives pair the anchor with hour ``t - 1``; negatives with ``t - k``
    for ``k`` uniform in ``[2, min(t, L - 1)]``; labels are drawn 1:1. Records
    whose window cannot hold the drawn pair get weight 0 and point at the
    anchor itself.

    Returns:
        Tuple of (partner window positions, labels, weights)
    """
    n = anchors.shape[0]
    label_draw = rng.random(n)
    offset_draw = rng.random(n)

    anchor_pos = context_length - 1
    positive = label_draw < 0.5
    k_max = np.minimum(anchors, context_length - 1)
    k_neg = 2 + np.floor(offset_draw * np.maximum(k_max - 1, 0)).astype(np.int64)
    k = np.where(positive, 1, k_neg)
    feasible = np.where(positive, k_max >= 1, k_max >= 2)

    partner = np.where(feasible, anchor_pos - k, anchor_pos).astype(np.int64)
    return partner, positive.astype(np.float64), feasible.astype(np.float64)


def build_model_dataset(
    cohort: Union[PreparedSplit, Sequence[PatientTrajectory]],
    horizon: int,
    metric: str,
    stats: NormalizationStats,
    scheme: Union[str, TrainingScheme] = TrainingScheme.STATES_AND_ACTIONS,
    context_length: int = 24,
    adjacency_seed: int = 11,
    keep_demographics: bool = False,
) -> ModelDataset:
    """Assemble dynamics records for one (metric, horizon) pair.

    One record per (patient, t) with ``t + horizon`` inside the trajectory.

    Args:
        cohort: Prepared split or complete trajectories
        horizon: Prediction horizon in hours
        metric: SOFA, SIRS or ShockIndex
        stats: Training-split normalization statistics
        scheme: Training scheme applied to drawn batches
        context_length: History window length
        adjacency_seed: Seed of the adjacency pair sampler
        keep_demographics: Keep demographics under ActionsOnly

    Returns:
        ModelDataset

    Raises:
        EmptyDatasetError: If no trajectory is longer than the horizon.
        NormalizationMismatchError: If a prepared split used other statistics.
    """
    if metric not in SEVERITY_METRICS:
        raise DataValidationError(f"unknown severity metric: {metric}")
    if isinstance(cohort, PreparedSplit):
        split = cohort
    else:
        split = PreparedSplit.from_trajectories("data", cohort, stats)
    if split.stats_fingerprint != stats.fingerprint():
        raise NormalizationMismatchError("normalization mismatch")

    patients, anchors = _record_coordinates(split, horizon)
    if patients.size == 0:
        raise EmptyDatasetError("no usable samples")

    m = SEVERITY_METRICS.index(metric)
    starts = split.offsets[patients]
    raw_delta = split.severity[starts + anchors + horizon, m] - split.severity[starts + anchors, m]
    terminal = (anchors + horizon == split.lengths[patients] - 1).astype(np.float64)

    rng = np.random.default_rng([adjacency_seed, horizon])
    partner, label, weight = sample_adjacency_pairs(anchors, context_length, rng)

    return ModelDataset(
        split=split,
        metric=metric,
        horizon=int(horizon),
        scheme=TrainingScheme(scheme).value,
        context_length=context_length,
        record_patient=patients,
        record_anchor=anchors,
        target=stats.normalize_delta(raw_delta, metric, horizon),
        terminal=terminal,
        adj_partner=partner,
        adj_label=label,
        adj_weight=weight,
        actions=_future_actions(split, patients, anchors, horizon),
        keep_demographics=keep_demographics,
    )


@dataclass(frozen=True)
class ActionBatch:
    """Inputs and dose targets of a behavior-cloning minibatch."""

    states: np.ndarray  # (B, L, C)
    valid: np.ndarray  # (B, L)
    demographics: np.ndarray  # (B, D)
    targets: np.ndarray  # (B, 12), horizon-major: [h1 fluid, h1 vaso, h2 fluid, ...]

    def __len__(self) -> int:
        return self.targets.shape[0]


@dataclass(frozen=True)
class ActionDataset:
    """Behavior-cloning records: z log-doses on hours t + 1 ... t + 6."""

    split: PreparedSplit
    context_length: int
    record_patient: np.ndarray
    record_anchor: np.ndarray
    targets: np.ndarray  # (N, 6, 2)

    def __len__(self) -> int:
        return self.record_patient.shape[0]

    @property
    def stats_fingerprint(self) -> str:
        return self.split.stats_fingerprint

    def batch(self, indices: Optional[np.ndarray] = None) -> ActionBatch:
        if indices is None:
            indices = np.arange(len(self))
        indices = np.asarray(indices, dtype=np.int64)
        patients = self.record_patient[indices]
        states, valid = gather_history(
            self.split, patients, self.record_anchor[indices], self.context_length
        )
        return ActionBatch(
            states=states,
            valid=valid,
            demographics=self.split.demographics[patients],
            targets=self.targets[indices].reshape(len(indices), -1),
        )

    def subset(self, indices: np.ndarray) -> "ActionDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            record_patient=self.record_patient[indices],
            record_anchor=self.record_anchor[indices],
            targets=self.targets[indices],
        )


def build_action_dataset(
    split: PreparedSplit, context_length: int = 24, horizon: int = BC_HORIZON
) -> ActionDataset:
    """Assemble behavior-cloning records for every anchor with six future doses.

    Raises:
        EmptyDatasetError: If no trajectory is longer than the horizon.
    """
    patients, anchors = _record_coordinates(split, horizon)
    if patients.size == 0:
        raise EmptyDatasetError("no usable samples")
    return ActionDataset(
        split=split,
        context_length=context_length,
        record_patient=patients,
        record_anchor=anchors,
        targets=_future_actions(split, patients, anchors, horizon),
    )
