"""z-scaling of observations, demographics, actions and severity deltas.

Channel identifiers are namespaced strings:

* ``obs:<name>`` and ``demo:<name>`` for state inputs,
* ``action:iv_fluid`` / ``action:vasopressor`` (scaled after ``log(1 + dose)``),
* ``delta:<metric>:<horizon>`` for severity changes ``y[t+h] - y[t]``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from action_signal.core.exceptions import DataValidationError, UnknownChannelError
from action_signal.data.trajectory import ACTION_CHANNELS, SEVERITY_METRICS, PatientTrajectory
from action_signal.utils.hashing import canonical_json, sha256_bytes
from action_signal.utils.logger import logger

DEFAULT_DELTA_HORIZONS = (6, 12, 18)


def obs_channel(name: str) -> str:
    return f"obs:{name}"


def demo_channel(name: str) -> str:
    return f"demo:{name}"


def action_channel(name: str) -> str:
    return f"action:{name}"


def delta_channel(metric: str, horizon: int) -> str:
    return f"delta:{metric}:{int(horizon)}"


@dataclass(frozen=True)
class ChannelStats:
    """Mean and standard deviation of one channel."""

    mean: float
    std: float

    def to_dict(self) -> Dict[str, float]:
        return {"mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class NormalizationStats:
    """Training-split statistics for every model channel."""

    channels: Dict[str, ChannelStats]
    observation_channels: Tuple[str, ...]
    demographic_channels: Tuple[str, ...]
    horizons: Tuple[int, ...] = DEFAULT_DELTA_HORIZONS
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def get(self, channel: str) -> ChannelStats:
        try:
            return self.channels[channel]
        except KeyError:
            raise UnknownChannelError(channel) from None

    def _vector(self, names: Iterable[str]) -> Tuple[np.ndarray, np.ndarray]:
        stats = [self.get(n) for n in names]
        return (
            np.array([s.mean for s in stats], dtype=np.float64),
            np.array([s.std for s in stats], dtype=np.float64),
        )

    # Vectorized transforms over the trailing channel axis

    def normalize_observations(self, values: np.ndarray) -> np.ndarray:
        mean, std = self._vector(obs_channel(n) for n in self.observation_channels)
        return (np.asarray(values, dtype=np.float64) - mean) / std

    def normalize_demographics(self, values: np.ndarray) -> np.ndarray:
        mean, std = self._vector(demo_channel(n) for n in self.demographic_channels)
        return (np.asarray(values, dtype=np.float64) - mean) / std

    def normalize_actions(self, doses: np.ndarray) -> np.ndarray:
        """Raw doses (..., 2) to z-scaled log(1 + dose)."""
        mean, std = self._vector(action_channel(n) for n in ACTION_CHANNELS)
        return (np.log1p(np.asarray(doses, dtype=np.float64)) - mean) / std

    def denormalize_actions(self, z: np.ndarray) -> np.ndarray:
        mean, std = self._vector(action_channel(n) for n in ACTION_CHANNELS)
        return np.maximum(np.expm1(np.asarray(z, dtype=np.float64) * std + mean), 0.0)

    def normalize_delta(self, raw: np.ndarray, metric: str, horizon: int) -> np.ndarray:
        stats = self.get(delta_channel(metric, horizon))
        return (np.asarray(raw, dtype=np.float64) - stats.mean) / stats.std

    def zero_dose_z(self) -> np.ndarray:
        """z-values of a raw zero dose for both drugs."""
        return self.normalize_actions(np.zeros(len(ACTION_CHANNELS)))

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization."""
        return {
            "channels": {name: s.to_dict() for name, s in sorted(self.channels.items())},
            "observation_channels": list(self.observation_channels),
            "demographic_channels": list(self.demographic_channels),
            "horizons": list(self.horizons),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormalizationStats":
        return cls(
            channels={
                k: ChannelStats(float(v["mean"]), float(v["std"]))
                for k, v in data["channels"].items()
            },
            observation_channels=tuple(data["observation_channels"]),
            demographic_channels=tuple(data["demographic_channels"]),
            horizons=tuple(int(h) for h in data.get("horizons", DEFAULT_DELTA_HORIZONS)),
            warnings=tuple(data.get("warnings", ())),
        )

    def fingerprint(self) -> str:
        """Content hash identifying these statistics."""
        payload = {k: v.to_dict() for k, v in sorted(self.channels.items())}
        return sha256_bytes(canonical_json(payload).encode("utf-8"))[:16]

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NormalizationStats":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _channel_stats(values: np.ndarray, channel: str, warnings: List[str]) -> ChannelStats:
    if values.size == 0:
        warnings.append(f"degenerate channel {channel}: no values, using mean 0 and std 1")
        return ChannelStats(0.0, 1.0)
    mean = float(np.mean(values))
    std = float(np.std(values))
    if not np.isfinite(std) or std <= 1e-12 * max(1.0, abs(mean)):
        warnings.append(f"degenerate channel {channel}: zero variance, std set to 1")
        std = 1.0
    return ChannelStats(mean, std)


def _check_finite(traj: PatientTrajectory, values: np.ndarray, names: Sequence[str]) -> None:
    if np.all(np.isfinite(values)):
        return
    step, col = np.argwhere(~np.isfinite(values))[0]
    raise DataValidationError(f"non-finite value at ({traj.patient_id}, {step}, {names[col]})")


def fit_normalization(
    train_split: Sequence[PatientTrajectory],
    observation_channels: Sequence[str],
    demographic_channels: Sequence[str],
    horizons: Sequence[int] = DEFAULT_DELTA_HORIZONS,
) -> NormalizationStats:
    """Compute z-scaling statistics from the training split only.

    Args:
        train_split: Preprocessed training trajectories (no missing values)
        observation_channels: Observation channel names, in column order
        demographic_channels: Demographic channel names, in column order
        horizons: Horizons for which severity-delta statistics are fitted

    Returns:
        NormalizationStats covering every channel

    Raises:
        DataValidationError: On an empty split or a non-finite value.
    """
    if len(train_split) == 0:
        raise DataValidationError("empty training split")

    for traj in train_split:
        _check_finite(traj, traj.observations, observation_channels)
        _check_finite(traj, traj.demographics[None, :], demographic_channels)
        _check_finite(traj, traj.actions, ACTION_CHANNELS)
        _check_finite(traj, traj.severity, SEVERITY_METRICS)

    warnings: List[str] = []
    channels: Dict[str, ChannelStats] = {}

    observations = np.concatenate([t.observations for t in train_split], axis=0)
    for j, name in enumerate(observation_channels):
        key = obs_channel(name)
        channels[key] = _channel_stats(observations[:, j], key, warnings)

    demographics = np.stack([t.demographics for t in train_split], axis=0)
    for j, name in enumerate(demographic_channels):
        key = demo_channel(name)
        channels[key] = _channel_stats(demographics[:, j], key, warnings)

    log_actions = np.log1p(np.concatenate([t.actions for t in train_split], axis=0))
    for j, name in enumerate(ACTION_CHANNELS):
        key = action_channel(name)
        channels[key] = _channel_stats(log_actions[:, j], key, warnings)

    for m, metric in enumerate(SEVERITY_METRICS):
        for horizon in horizons:
            deltas = [
                t.severity[horizon:, m] - t.severity[:-horizon, m]
                for t in train_split
                if len(t) > horizon
            ]
            values = np.concatenate(deltas) if deltas else np.empty(0)
            name = delta_channel(metric, horizon)
            channels[name] = _channel_stats(values, name, warnings)

    for message in warnings:
        logger.warning(message)

    return NormalizationStats(
        channels=channels,
        observation_channels=tuple(observation_channels),
        demographic_channels=tuple(demographic_channels),
        horizons=tuple(int(h) for h in horizons),
        warnings=tuple(warnings),
    )


def apply_normalization(value: float, channel: str, stats: NormalizationStats) -> float:
    """z-scale one raw value; action doses pass through log(1 + dose) first.

    Raises:
        UnknownChannelError: If the channel has no statistics.
    """
    s = stats.get(channel)
    if channel.startswith("action:"):
        value = np.log1p(value)
    return float((value - s.mean) / s.std)


def invert_normalization(z: float, channel: str, stats: NormalizationStats) -> float:
    """Map a z-value back to raw units; action doses are clamped at 0.

    Raises:
        UnknownChannelError: If the channel has no statistics.
    """
    s = stats.get(channel)
    value = z * s.std + s.mean
    if channel.startswith("action:"):
        return float(max(np.expm1(value), 0.0))
    return float(value)
