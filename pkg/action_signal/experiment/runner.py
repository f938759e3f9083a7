"""Grid orchestration: train every cell, evaluate the four conditions, aggregate."""

import json
from dataclasses import dataclass, field
from datetime import datetime
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from action_signal.config.schema import RunConfig
from action_signal.core.exceptions import DataValidationError, EmptyDatasetError
from action_signal.experiment.conditions import EvalCondition
from action_signal.experiment.evaluate import ConditionEvaluation, evaluate_all_conditions
from action_signal.experiment.grid import ExperimentGrid, GridCell
from action_signal.experiment.train import train_dynamics_model
from action_signal.experiment.verdict import compute_verdict, summarize_rows
from action_signal.nn.tensorfile import save_tensors
from action_signal.preprocessing.pipeline import PreparedData
from action_signal.utils.logger import logger

SAMPLES_FILE = "predictions.tensors"

PathLike = Union[str, Path]


def retained_indices(n: int, k: int) -> np.ndarray:
    """Up to ``k`` evenly spaced record indices out of ``n``."""
    if k <= 0 or n <= k:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, k).round().astype(np.int64))


def save_samples(path: PathLike, evaluations: Dict[str, ConditionEvaluation], k: int) -> Path:
    """Store retained prediction/target pairs per condition for histograms."""
    tensors = {}
    for condition, evaluation in evaluations.items():
        idx = retained_indices(len(evaluation.targets), k)
        tensors[f"{condition}/pred"] = evaluation.predictions[idx]
        tensors[f"{condition}/true"] = evaluation.targets[idx]
    return save_tensors(path, tensors, {"kind": "dynamics_samples"})


@dataclass
class CellResult:
    """Result of training and evaluating one grid cell."""

    cell: GridCell
    success: bool = False
    rmse: Dict[str, float] = field(default_factory=dict)
    n_train: int = 0
    n_test: int = 0
    best_epoch: int = 0
    stopped_early: bool = False
    training_curve: List[Dict[str, Any]] = field(default_factory=list)
    checkpoint: Optional[str] = None
    samples: Optional[str] = None
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cell": self.cell.to_dict(),
            "name": self.cell.name,
            "success": self.success,
            "rmse": dict(self.rmse),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "training_curve": list(self.training_curve),
            "checkpoint": self.checkpoint,
            "samples": self.samples,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CellResult":
        return cls(
            cell=GridCell.from_dict(data["cell"]),
            success=bool(data["success"]),
            rmse={k: float(v) for k, v in data.get("rmse", {}).items()},
            n_train=int(data.get("n_train", 0)),
            n_test=int(data.get("n_test", 0)),
            best_epoch=int(data.get("best_epoch", 0)),
            stopped_early=bool(data.get("stopped_early", False)),
            training_curve=list(data.get("training_curve", [])),
            checkpoint=data.get("checkpoint"),
            samples=data.get("samples"),
            error=data.get("error"),
        )


@dataclass
class DiagnosticReport:
    """Per-cell RMSEs under every condition, aggregation and verdict."""

    grid: ExperimentGrid
    cells: List[CellResult]

    @property
    def successful(self) -> int:
        return sum(1 for c in self.cells if c.success)

    @property
    def failed(self) -> int:
        return sum(1 for c in self.cells if not c.success)

    def rmse_rows(self) -> List[Dict[str, Any]]:
        """Flat table rows: metric, horizon, scheme, seed, condition, rmse."""
        rows = []
        for result in sorted(self.cells, key=lambda r: r.cell.sort_key()):
            if not result.success:
                continue
            for condition in EvalCondition:
                rows.append(
                    {
                        "metric": result.cell.metric,
                        "horizon": result.cell.horizon,
                        "scheme": result.cell.scheme,
                        "seed": result.cell.seed,
                        "condition": condition.value,
                        "rmse": result.rmse[condition.value],
                    }
                )
        return rows

    def summary(self) -> List[Dict[str, Any]]:
        return summarize_rows(self.rmse_rows())

    def verdict(self) -> Dict[str, Any]:
        return compute_verdict(self.rmse_rows())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grid": {
                "metrics": list(self.grid.metrics),
                "horizons": list(self.grid.horizons),
                "schemes": list(self.grid.schemes),
                "seeds": list(self.grid.seeds),
            },
            "total": len(self.cells),
            "successful": self.successful,
            "failed": self.failed,
            "cells": [c.to_dict() for c in self.cells],
            "summary": self.summary(),
            "verdict": self.verdict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DiagnosticReport":
        try:
            grid = data["grid"]
            return cls(
                grid=ExperimentGrid(
                    metrics=tuple(grid["metrics"]),
                    horizons=tuple(int(h) for h in grid["horizons"]),
                    schemes=tuple(grid["schemes"]),
                    seeds=tuple(int(s) for s in grid["seeds"]),
                ),
                cells=[CellResult.from_dict(c) for c in data["cells"]],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataValidationError(f"malformed grid results: {e}") from e

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    @classmethod
    def load(cls, path: PathLike) -> "DiagnosticReport":
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise DataValidationError(f"malformed grid results {path}: {e}") from e
        return cls.from_dict(data)


def run_cell(
    cell: GridCell,
    prepared: PreparedData,
    config: RunConfig,
    checkpoint_root: Optional[PathLike] = None,
) -> CellResult:
    """Train one cell and evaluate it under every condition.

    Failures are recorded on the result instead of raised.
    """
    start_time = datetime.now()
    result = CellResult(cell=cell)
    keep_demographics = config.preprocessing.actions_only_keeps_demographics

    def records(split: str):
        return prepared.dataset(
            split,
            cell.metric,
            cell.horizon,
            cell.scheme,
            context_length=config.model.context_length,
            adjacency_seed=config.preprocessing.adjacency_seed,
            keep_demographics=keep_demographics,
        )

    try:
        train = records("train")
        try:
            val = records("val")
        except EmptyDatasetError:
            logger.warning(f"{cell.name}: no validation records, monitoring the training loss")
            val = None
        test = records("test")

        cell_dir = Path(checkpoint_root) / cell.name if checkpoint_root is not None else None
        model, log = train_dynamics_model(
            cell,
            train,
            val,
            config.model,
            config.training,
            checkpoint_dir=cell_dir,
            keep_demographics=keep_demographics,
        )
        evaluations = evaluate_all_conditions(
            model,
            test,
            prepared.stats,
            cell.seed,
            per_trajectory=config.grid.shuffle_per_trajectory,
        )

        result.rmse = {c: e.rmse for c, e in evaluations.items()}
        result.n_train = log.n_train
        result.n_test = len(test)
        result.best_epoch = log.best_epoch
        result.stopped_early = log.stopped_early
        result.training_curve = [
            {"epoch": e.epoch, "train_loss": e.train_loss, "val_loss": e.val_loss}
            for e in log.epochs
        ]
        if cell_dir is not None:
            save_samples(cell_dir / SAMPLES_FILE, evaluations, config.grid.retained_samples)
            result.checkpoint = f"{cell.name}/model.tensors"
            result.samples = f"{cell.name}/{SAMPLES_FILE}"
        result.success = True
        logger.info(
            f"{cell.name}: "
            + ", ".join(f"{c} {v:.4f}" for c, v in result.rmse.items())
            + f" ({(datetime.now() - start_time).total_seconds():.1f}s)"
        )

    except Exception as e:
        result.error = str(e)
        logger.error(f"Cell {cell.name} failed: {e}")

    return result


# Per-process state of pool workers
_WORKER_STATE: Dict[str, Any] = {}


def _init_worker(prepared: PreparedData, config: RunConfig, checkpoint_root: Optional[str]) -> None:
    _WORKER_STATE["prepared"] = prepared
    _WORKER_STATE["config"] = config
    _WORKER_STATE["checkpoint_root"] = checkpoint_root


def _cell_worker(cell: GridCell) -> CellResult:
    return run_cell(
        cell,
        _WORKER_STATE["prepared"],
        _WORKER_STATE["config"],
        _WORKER_STATE["checkpoint_root"],
    )


def run_experiment_grid(
    prepared: PreparedData,
    config: RunConfig,
    checkpoint_root: Optional[PathLike] = None,
    workers: int = 1,
    grid: Optional[ExperimentGrid] = None,
) -> DiagnosticReport:
    """Train and evaluate every cell of the grid.

    Cells run in a process pool when ``workers > 1``; each cell seeds itself,
    so results do not depend on the worker count. Results are merged in
    canonical cell order.

    Args:
        prepared: Preprocessed splits and statistics
        config: Run configuration
        checkpoint_root: Directory receiving one sub-directory per cell
        workers: Number of worker processes
        grid: Grid to run, defaults to the configured one

    Returns:
        DiagnosticReport
    """
    grid = grid or ExperimentGrid.from_config(config.grid)
    cells = grid.cells()
    root = str(checkpoint_root) if checkpoint_root is not None else None
    logger.info(f"Running {len(cells)} grid cells on {workers} worker(s)")

    if workers > 1 and len(cells) > 1:
        with Pool(
            processes=min(workers, len(cells)),
            initializer=_init_worker,
            initargs=(prepared, config, root),
        ) as pool:
            results = pool.map(_cell_worker, cells, chunksize=1)
    else:
        results = [run_cell(cell, prepared, config, root) for cell in cells]

    report = DiagnosticReport(grid=grid, cells=sorted(results, key=lambda r: r.cell.sort_key()))
    logger.info(f"Grid finished: {report.successful} succeeded, {report.failed} failed")
    return report
