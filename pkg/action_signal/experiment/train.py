"""Minibatch training with early stopping on validation MSE."""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from action_signal.config.schema import DynamicsModelConfig, TrainingConfig
from action_signal.core.exceptions import DivergenceError, EmptyDatasetError
from action_signal.experiment.grid import GridCell
from action_signal.nn.model import DynamicsModel
from action_signal.nn.optim import Adam, Trainable, backward_and_step
from action_signal.preprocessing.dataset import ModelDataset
from action_signal.utils.logger import logger

# Substreams derived from a cell seed
SUBSAMPLE_STREAM = 1
ORDER_STREAM = 2
DROPOUT_STREAM = 3

CHECKPOINT_FILE = "model.tensors"
TRAINING_LOG_FILE = "training_log.json"
DIVERGENCE_FILE = "divergence.json"

PathLike = Union[str, Path]


@dataclass
class EpochRecord:
    """Losses of one training epoch."""

    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float
    components: Dict[str, float] = field(default_factory=dict)


@dataclass
class TrainingLog:
    """Per-epoch curve and early-stopping outcome of one model."""

    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stopped_early: bool = False
    steps: int = 0
    n_train: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "stopped_early": self.stopped_early,
            "steps": self.steps,
            "n_train": self.n_train,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainingLog":
        return cls(
            epochs=[EpochRecord(**e) for e in data.get("epochs", [])],
            best_epoch=int(data.get("best_epoch", 0)),
            best_val_loss=float(data.get("best_val_loss", math.inf)),
            stopped_early=bool(data.get("stopped_early", False)),
            steps=int(data.get("steps", 0)),
            n_train=int(data.get("n_train", 0)),
        )

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path


def severity_mse(model: DynamicsModel, dataset: ModelDataset) -> float:
    """Eval-mode MSE of the severity head, in squared z-units."""
    return float(np.mean((model.predict(dataset) - dataset.target) ** 2))


def fit(
    model: Trainable,
    train_data: Any,
    val_loss: Callable[[], float],
    config: TrainingConfig,
    seed: int,
    label: str = "model",
) -> TrainingLog:
    """Train with Adam until ``max_epochs`` or ``patience`` epochs without improvement.

    The parameters with the lowest validation loss are restored at the end.
    Shuffling, subsampling and dropout draw from substreams of ``seed``.

    Args:
        model: Model with ``params`` and ``loss_and_grads``
        train_data: Dataset exposing ``__len__`` and ``batch(indices)``
        val_loss: Eval-mode validation loss of the current parameters
        config: Optimizer and early-stopping settings
        seed: Seed of the data order
        label: Name used in log messages

    Raises:
        EmptyDatasetError: If there are no training records.
        DivergenceError: If a step produces a non-finite loss.
    """
    n = len(train_data)
    if n == 0:
        raise EmptyDatasetError("empty training split")
    indices = np.arange(n)
    if 0 < config.max_train_samples < n:
        sub_rng = np.random.default_rng([seed, SUBSAMPLE_STREAM])
        indices = np.sort(sub_rng.choice(n, size=config.max_train_samples, replace=False))

    order_rng = np.random.default_rng([seed, ORDER_STREAM])
    dropout_rng = np.random.default_rng([seed, DROPOUT_STREAM])
    steps_per_epoch = math.ceil(len(indices) / config.batch_size)
    optimizer = Adam.from_config(
        model.params, config, total_steps=steps_per_epoch * config.max_epochs
    )

    log = TrainingLog(n_train=len(indices))
    best = model.params.snapshot()
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        lr = optimizer.current_lr()
        order = indices[order_rng.permutation(len(indices))]
        total = 0.0
        components: Dict[str, float] = {}
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            result = backward_and_step(model, train_data.batch(idx), optimizer, rng=dropout_rng)
            total += result.total * len(idx)
            for key, value in result.components.items():
                components[key] = components.get(key, 0.0) + value * len(idx)

        val = val_loss()
        record = EpochRecord(
            epoch=epoch,
            train_loss=total / len(order),
            val_loss=val,
            learning_rate=lr,
            components={k: v / len(order) for k, v in components.items()},
        )
        log.epochs.append(record)
        logger.debug(f"{label} epoch {epoch}: train {record.train_loss:.5f} val {val:.5f}")

        if val < log.best_val_loss:
            log.best_val_loss = val
            log.best_epoch = epoch
            best = model.params.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                log.stopped_early = True
                logger.info(f"{label}: early stop at epoch {epoch}, best epoch {log.best_epoch}")
                break

    model.params.restore(best)
    log.steps = model.params.step_count
    return log


def train_dynamics_model(
    cell: GridCell,
    train_data: ModelDataset,
    val_data: Optional[ModelDataset],
    model_config: DynamicsModelConfig,
    training_config: TrainingConfig,
    checkpoint_dir: Optional[PathLike] = None,
    keep_demographics: bool = False,
) -> Tuple[DynamicsModel, TrainingLog]:
    """Train the dynamics model of one grid cell.

    Without validation records the training severity MSE drives early
    stopping. The checkpoint and the training log are written to
    ``checkpoint_dir`` when given; a divergence dump is written there too
    before the error propagates.

    Returns:
        Tuple of (trained model, training log)
    """
    model = DynamicsModel(
        model_config,
        n_channels=train_data.split.n_channels,
        n_demographics=train_data.split.n_demographics,
        horizon=cell.horizon,
        scheme=cell.scheme,
        seed=cell.seed,
        keep_demographics=keep_demographics,
        stats_fingerprint=train_data.stats_fingerprint,
    )
    monitor = val_data if val_data is not None and len(val_data) > 0 else train_data
    logger.info(
        f"Training {cell.name}: {len(train_data)} records, "
        f"{model.params.n_parameters} parameters"
    )

    try:
        log = fit(
            model,
            train_data,
            lambda: severity_mse(model, monitor),
            training_config,
            seed=cell.seed,
            label=cell.name,
        )
    except DivergenceError as e:
        logger.error(f"{cell.name}: {e}")
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir) / DIVERGENCE_FILE
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(e.dump, f, indent=2, sort_keys=True, default=str)
        raise

    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        model.save(
            checkpoint_dir / CHECKPOINT_FILE,
            extra={"cell": cell.to_dict(), "best_epoch": log.best_epoch},
        )
        log.save(checkpoint_dir / TRAINING_LOG_FILE)
    return model, log
