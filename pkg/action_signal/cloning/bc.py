"""Behavior cloning: predict the next six hours of doses from the state history."""

import json
from dataclasses import dataclass, field
from datetime import datetime
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from action_signal.config.schema import BehaviorCloningConfig, DynamicsModelConfig, RunConfig
from action_signal.core.exceptions import DataValidationError, EmptyDatasetError
from action_signal.data.trajectory import ACTION_CHANNELS
from action_signal.experiment.runner import retained_indices
from action_signal.experiment.train import CHECKPOINT_FILE, TRAINING_LOG_FILE, TrainingLog, fit
from action_signal.experiment.verdict import sample_std
from action_signal.nn.model import BehaviorCloneModel
from action_signal.nn.tensorfile import save_tensors
from action_signal.preprocessing.dataset import BC_HORIZON, ActionDataset, build_action_dataset
from action_signal.preprocessing.pipeline import PreparedData
from action_signal.utils.logger import logger

SAMPLES_FILE = "predictions.tensors"
BC_HORIZONS = tuple(range(1, BC_HORIZON + 1))

PathLike = Union[str, Path]


def bc_cell_name(seed: int) -> str:
    return f"bc_s{seed}"


def r_squared(targets: np.ndarray, predictions: np.ndarray) -> Optional[float]:
    """Coefficient of determination 1 − SS_res / SS_tot; None when the targets are constant."""
    targets = np.asarray(targets, dtype=np.float64)
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    if targets.size == 0 or ss_tot <= 0.0:
        return None
    ss_res = float(np.sum((targets - np.asarray(predictions, dtype=np.float64)) ** 2))
    return 1.0 - ss_res / ss_tot


def pearson_r_squared(targets: np.ndarray, predictions: np.ndarray) -> Optional[float]:
    """Squared Pearson correlation; None when either side is constant."""
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if targets.size < 2 or np.ptp(targets) == 0.0 or np.ptp(predictions) == 0.0:
        return None
    r = float(np.corrcoef(targets, predictions)[0, 1])
    return r * r


def action_mse(model: BehaviorCloneModel, dataset: ActionDataset) -> float:
    predictions = model.predict(dataset)
    return float(np.mean((predictions - dataset.targets.reshape(len(dataset), -1)) ** 2))


@dataclass
class BCSeedResult:
    """One behavior-cloning replicate."""

    seed: int
    success: bool = False
    # drug -> horizon (as string key) -> value or None when undefined
    r2: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)
    pearson_r2: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)
    n_train: int = 0
    n_test: int = 0
    best_epoch: int = 0
    training_curve: List[Dict[str, Any]] = field(default_factory=list)
    checkpoint: Optional[str] = None
    samples: Optional[str] = None
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "success": self.success,
            "r2": self.r2,
            "pearson_r2": self.pearson_r2,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "best_epoch": self.best_epoch,
            "training_curve": list(self.training_curve),
            "checkpoint": self.checkpoint,
            "samples": self.samples,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BCSeedResult":
        return cls(
            seed=int(data["seed"]),
            success=bool(data["success"]),
            r2=data.get("r2", {}),
            pearson_r2=data.get("pearson_r2", {}),
            n_train=int(data.get("n_train", 0)),
            n_test=int(data.get("n_test", 0)),
            best_epoch=int(data.get("best_epoch", 0)),
            training_curve=list(data.get("training_curve", [])),
            checkpoint=data.get("checkpoint"),
            samples=data.get("samples"),
            error=data.get("error"),
        )


@dataclass
class BCReport:
    """R² per seed, drug and horizon with cross-seed aggregation."""

    results: List[BCSeedResult] = field(default_factory=list)

    @property
    def failed(self) -> int:
        return sum(1 for r in self.results if not r.success)

    def rows(self) -> List[Dict[str, Any]]:
        """Flat rows: seed, drug, horizon, r2 (None when undefined)."""
        rows = []
        for result in sorted(self.results, key=lambda r: r.seed):
            if not result.success:
                continue
            for drug in ACTION_CHANNELS:
                for horizon in BC_HORIZONS:
                    r2 = result.r2[drug][str(horizon)]
                    rows.append({"seed": result.seed, "drug": drug, "horizon": horizon, "r2": r2})
        return rows

    def summary(self) -> List[Dict[str, Any]]:
        """Mean and std over the seeds with a defined R² per (drug, horizon)."""
        summary = []
        for drug in ACTION_CHANNELS:
            for horizon in BC_HORIZONS:
                defined = [
                    r.r2[drug][str(horizon)]
                    for r in sorted(self.results, key=lambda r: r.seed)
                    if r.success and r.r2[drug][str(horizon)] is not None
                ]
                summary.append(
                    {
                        "drug": drug,
                        "horizon": horizon,
                        "mean": float(np.mean(defined)) if defined else None,
                        "std": sample_std(defined) if defined else None,
                        "n_seeds": len(defined),
                    }
                )
        return summary

    def mean_r2(self, drug: str, horizon: int) -> Optional[float]:
        for entry in self.summary():
            if entry["drug"] == drug and entry["horizon"] == horizon:
                return entry["mean"]
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "results": [r.to_dict() for r in sorted(self.results, key=lambda r: r.seed)],
            "summary": self.summary(),
            "failed": self.failed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BCReport":
        try:
            return cls(results=[BCSeedResult.from_dict(r) for r in data["results"]])
        except (KeyError, TypeError, ValueError) as e:
            raise DataValidationError(f"malformed behavior-cloning results: {e}") from e

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    @classmethod
    def load(cls, path: PathLike) -> "BCReport":
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise DataValidationError(f"malformed behavior-cloning results {path}: {e}") from e
        return cls.from_dict(data)


def train_behavior_clone(
    train_data: ActionDataset,
    val_data: Optional[ActionDataset],
    model_config: DynamicsModelConfig,
    config: BehaviorCloningConfig,
    seed: int,
    checkpoint_dir: Optional[PathLike] = None,
) -> Tuple[BehaviorCloneModel, TrainingLog]:
    """Train one behavior-cloning replicate with MSE on 12 dose outputs.

    Raises:
        DivergenceError: If training produces a non-finite loss.
    """
    model = BehaviorCloneModel(
        model_config,
        n_channels=train_data.split.n_channels,
        n_demographics=train_data.split.n_demographics,
        hidden_dim=config.hidden_dim,
        n_outputs=2 * config.max_horizon,
        seed=seed,
        stats_fingerprint=train_data.stats_fingerprint,
    )
    if config.init_from_checkpoint:
        copied = model.init_encoder_from(config.init_from_checkpoint)
        logger.info(f"Initialized {copied} encoder tensors from {config.init_from_checkpoint}")

    monitor = val_data if val_data is not None and len(val_data) > 0 else train_data
    name = bc_cell_name(seed)
    logger.info(
        f"Training {name}: {len(train_data)} records, {model.params.n_parameters} parameters"
    )
    log = fit(
        model,
        train_data,
        lambda: action_mse(model, monitor),
        config.training,
        seed=seed,
        label=name,
    )

    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        model.save(checkpoint_dir / CHECKPOINT_FILE, extra={"best_epoch": log.best_epoch})
        log.save(checkpoint_dir / TRAINING_LOG_FILE)
    return model, log


def evaluate_r2(
    model: BehaviorCloneModel,
    test_data: ActionDataset,
    retained_samples: int = 0,
    samples_path: Optional[PathLike] = None,
) -> BCReport:
    """R² and Pearson r² per (drug, horizon) in z-scaled log-dose space.

    Returns:
        BCReport holding this model's replicate
    """
    predictions = model.predict(test_data).reshape(len(test_data), BC_HORIZON, len(ACTION_CHANNELS))
    targets = test_data.targets
    result = BCSeedResult(seed=model.seed, success=True, n_test=len(test_data))
    tensors = {}
    idx = retained_indices(len(test_data), retained_samples)
    for d, drug in enumerate(ACTION_CHANNELS):
        result.r2[drug] = {}
        result.pearson_r2[drug] = {}
        for horizon in BC_HORIZONS:
            y = targets[:, horizon - 1, d]
            p = predictions[:, horizon - 1, d]
            result.r2[drug][str(horizon)] = r_squared(y, p)
            result.pearson_r2[drug][str(horizon)] = pearson_r_squared(y, p)
            tensors[f"{drug}/{horizon}/pred"] = p[idx]
            tensors[f"{drug}/{horizon}/true"] = y[idx]
            if result.r2[drug][str(horizon)] is None:
                logger.warning(f"R² undefined for {drug} at {horizon}h: constant targets")
    if samples_path is not None:
        save_tensors(samples_path, tensors, {"kind": "bc_samples", "seed": model.seed})
    return BCReport(results=[result])


def run_bc_seed(
    seed: int,
    prepared: PreparedData,
    config: RunConfig,
    checkpoint_root: Optional[PathLike] = None,
) -> BCSeedResult:
    """Train and evaluate one replicate; failures are recorded on the result."""
    start_time = datetime.now()
    bc = config.behavior_cloning
    result = BCSeedResult(seed=seed)
    try:
        context = config.model.context_length
        train = build_action_dataset(prepared.train, context, bc.max_horizon)
        try:
            val = build_action_dataset(prepared.val, context, bc.max_horizon)
        except EmptyDatasetError:
            logger.warning(
                f"{bc_cell_name(seed)}: no validation records, monitoring the training loss"
            )
            val = None
        test = build_action_dataset(prepared.test, context, bc.max_horizon)

        cell_dir = None
        if checkpoint_root is not None:
            cell_dir = Path(checkpoint_root) / bc_cell_name(seed)
        model, log = train_behavior_clone(
            train, val, config.model, bc, seed, checkpoint_dir=cell_dir
        )
        samples_path = cell_dir / SAMPLES_FILE if cell_dir is not None else None
        result = evaluate_r2(model, test, bc.retained_samples, samples_path).results[0]
        result.n_train = log.n_train
        result.best_epoch = log.best_epoch
        result.training_curve = [
            {"epoch": e.epoch, "train_loss": e.train_loss, "val_loss": e.val_loss}
            for e in log.epochs
        ]
        if cell_dir is not None:
            result.checkpoint = f"{bc_cell_name(seed)}/{CHECKPOINT_FILE}"
            result.samples = f"{bc_cell_name(seed)}/{SAMPLES_FILE}"
        elapsed = (datetime.now() - start_time).total_seconds()
        logger.info(f"{bc_cell_name(seed)} done ({elapsed:.1f}s)")

    except Exception as e:
        result.success = False
        result.error = str(e)
        logger.error(f"Behavior cloning seed {seed} failed: {e}")

    return result


_WORKER_STATE: Dict[str, Any] = {}


def _init_worker(prepared: PreparedData, config: RunConfig, checkpoint_root: Optional[str]) -> None:
    _WORKER_STATE.update(prepared=prepared, config=config, checkpoint_root=checkpoint_root)


def _seed_worker(seed: int) -> BCSeedResult:
    return run_bc_seed(
        seed,
        _WORKER_STATE["prepared"],
        _WORKER_STATE["config"],
        _WORKER_STATE["checkpoint_root"],
    )


def run_behavior_cloning(
    prepared: PreparedData,
    config: RunConfig,
    checkpoint_root: Optional[PathLike] = None,
    workers: int = 1,
) -> BCReport:
    """Train and evaluate every configured replicate, in parallel across seeds."""
    seeds = sorted(config.behavior_cloning.seeds)
    root = str(checkpoint_root) if checkpoint_root is not None else None
    logger.info(f"Running {len(seeds)} behavior-cloning replicate(s) on {workers} worker(s)")
    if workers > 1 and len(seeds) > 1:
        with Pool(
            processes=min(workers, len(seeds)),
            initializer=_init_worker,
            initargs=(prepared, config, root),
        ) as pool:
            results = pool.map(_seed_worker, seeds, chunksize=1)
    else:
        results = [run_bc_seed(seed, prepared, config, root) for seed in seeds]
    return BCReport(results=sorted(results, key=lambda r: r.seed))
