"""Report emission: RMSE table, cross-seed summary, verdict, R² table, histograms."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from action_signal.cloning.bc import BCReport
from action_signal.config.schema import ReportConfig
from action_signal.core.exceptions import ResultsNotFoundError, StageError
from action_signal.data.trajectory import ACTION_CHANNELS
from action_signal.experiment.runner import DiagnosticReport
from action_signal.nn.tensorfile import load_tensors
from action_signal.reporting.manifest import RunManifest
from action_signal.reporting.svg import write_histogram
from action_signal.utils.logger import logger

GRID_RESULTS = "results/grid.json"
BC_RESULTS = "results/bc.json"
CHECKPOINT_DIR = "checkpoints"
REPORT_DIR = "report"

RMSE_COLUMNS = ["metric", "horizon", "scheme", "seed", "condition", "rmse"]
BC_COLUMNS = ["seed", "drug", "horizon", "r2"]

PathLike = Union[str, Path]


@dataclass
class EmissionResult:
    """Files written by a report emission and the inputs that could not be used."""

    files: List[Path] = field(default_factory=list)
    errors: Dict[str, str] = field(default_factory=dict)
    skipped: List[str] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return not self.errors


def _write_json(path: Path, data: Any) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _write_csv(path: Path, rows: List[Dict[str, Any]], columns: List[str]) -> Path:
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def _resolve(
    run_dir: Path, relative: str, stage: str, manifest: Optional[RunManifest]
) -> Optional[Path]:
    """Input file of a stage: through the manifest when one is given."""
    if manifest is not None:
        if relative not in manifest.files(stage):
            return None
        return manifest.require(stage, relative)
    path = run_dir / relative
    return path if path.exists() else None


def write_rmse_tables(report: DiagnosticReport, out_dir: PathLike) -> List[Path]:
    """rmse_table.csv, rmse_summary.json and verdict.json for grid results."""
    out_dir = Path(out_dir)
    rows = report.rmse_rows()
    return [
        _write_csv(out_dir / "rmse_table.csv", rows, RMSE_COLUMNS),
        _write_json(
            out_dir / "rmse_summary.json",
            {
                "rows": report.summary(),
                "cells": {
                    "total": len(report.cells),
                    "successful": report.successful,
                    "failed": report.failed,
                },
                "failed_cells": {r.cell.name: r.error for r in report.cells if not r.success},
            },
        ),
        _write_json(out_dir / "verdict.json", report.verdict()),
    ]


def write_bc_tables(report: BCReport, out_dir: PathLike) -> List[Path]:
    """bc_r2.csv (undefined R² left empty) and bc_summary.json."""
    out_dir = Path(out_dir)
    return [
        _write_csv(out_dir / "bc_r2.csv", report.rows(), BC_COLUMNS),
        _write_json(
            out_dir / "bc_summary.json",
            {
                "rows": report.summary(),
                "pearson_r2": {str(r.seed): r.pearson_r2 for r in report.results if r.success},
                "failed_seeds": {str(r.seed): r.error for r in report.results if not r.success},
            },
        ),
    ]


def _pool_samples(
    run_dir: Path,
    sample_files: List[str],
    keys: Tuple[str, str],
    manifest: Optional[RunManifest],
    stage: str,
) -> Tuple[np.ndarray, np.ndarray]:
    true_parts, pred_parts = [], []
    for relative in sample_files:
        path = _resolve(run_dir, f"{CHECKPOINT_DIR}/{relative}", stage, manifest)
        if path is None:
            logger.warning(f"Prediction samples missing: {relative}")
            continue
        tensors, _ = load_tensors(path)
        if keys[0] not in tensors or keys[1] not in tensors:
            logger.warning(f"Prediction samples {relative} lack {keys[0]}")
            continue
        true_parts.append(tensors[keys[0]])
        pred_parts.append(tensors[keys[1]])
    if not true_parts:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(true_parts), np.concatenate(pred_parts)


def emit_histograms(
    run_dir: PathLike,
    report_config: ReportConfig,
    grid: Optional[DiagnosticReport] = None,
    bc: Optional[BCReport] = None,
    manifest: Optional[RunManifest] = None,
) -> EmissionResult:
    """Overlaid true-vs-predicted histograms from retained prediction samples.

    Dynamics histograms pool the seeds of each requested (metric, horizon,
    condition) for the configured scheme; behavior-cloning histograms pool the
    seeds per (drug, horizon). Requests without samples are skipped.
    """
    run_dir = Path(run_dir)
    out_dir = run_dir / REPORT_DIR
    result = EmissionResult()
    bins = report_config.histogram_bins

    if grid is not None:
        scheme = report_config.histogram_scheme
        for request in report_config.histograms:
            files = [
                r.samples
                for r in grid.cells
                if r.success
                and r.samples
                and r.cell.metric == request.metric
                and r.cell.horizon == request.horizon
                and r.cell.scheme == scheme
            ]
            keys = (f"{request.condition}/true", f"{request.condition}/pred")
            true, pred = _pool_samples(run_dir, files, keys, manifest, "train-dynamics")
            name = f"hist_{request.metric}_{request.horizon}h_{scheme}_{request.condition}"
            title = (
                f"{request.metric} change at {request.horizon}h, {scheme}, "
                f"{request.condition} actions"
            )
            written = write_histogram(out_dir / f"{name}.svg", true, pred, title, bins)
            if written is None:
                result.skipped.append(name)
            else:
                result.files.append(written)

    if bc is not None:
        ordered = sorted(bc.results, key=lambda r: r.seed)
        files = [r.samples for r in ordered if r.success and r.samples]
        for drug in ACTION_CHANNELS:
            for horizon in report_config.bc_histogram_horizons:
                keys = (f"{drug}/{horizon}/true", f"{drug}/{horizon}/pred")
                true, pred = _pool_samples(run_dir, files, keys, manifest, "train-bc")
                name = f"bc_hist_{drug}_{horizon}h"
                title = f"{drug} dose at +{horizon}h, true vs behavior clone"
                written = write_histogram(out_dir / f"{name}.svg", true, pred, title, bins)
                if written is None:
                    result.skipped.append(name)
                else:
                    result.files.append(written)

    return result


def emit_report(
    run_dir: PathLike,
    report_config: Optional[ReportConfig] = None,
    manifest: Optional[RunManifest] = None,
) -> EmissionResult:
    """Write every report artifact of a run directory into ``<run_dir>/report``.

    A corrupt results file is recorded by name and the remaining artifacts are
    still emitted.

    Args:
        run_dir: Run directory holding ``results/`` and ``checkpoints/``
        report_config: Histogram settings
        manifest: When given, inputs are read only if manifested and unmodified

    Returns:
        EmissionResult

    Raises:
        ResultsNotFoundError: If neither grid nor behavior-cloning results exist
    """
    run_dir = Path(run_dir)
    report_config = report_config or ReportConfig()
    result = EmissionResult()

    inputs = {}
    for relative, stage in ((GRID_RESULTS, "train-dynamics"), (BC_RESULTS, "train-bc")):
        try:
            inputs[relative] = _resolve(run_dir, relative, stage, manifest)
        except StageError as e:
            result.errors[relative] = str(e)
            logger.error(f"Cannot use {relative}: {e}")
            inputs[relative] = None
    if inputs[GRID_RESULTS] is None and inputs[BC_RESULTS] is None and not result.errors:
        raise ResultsNotFoundError("no results found")

    out_dir = run_dir / REPORT_DIR
    out_dir.mkdir(parents=True, exist_ok=True)

    grid: Optional[DiagnosticReport] = None
    if inputs[GRID_RESULTS] is not None:
        try:
            grid = DiagnosticReport.load(inputs[GRID_RESULTS])
            result.files.extend(write_rmse_tables(grid, out_dir))
            logger.info(f"RMSE tables written for {grid.successful} cells")
        except Exception as e:
            grid = None
            result.errors[GRID_RESULTS] = str(e)
            logger.error(f"Corrupt results file {GRID_RESULTS}: {e}")

    bc: Optional[BCReport] = None
    if inputs[BC_RESULTS] is not None:
        try:
            bc = BCReport.load(inputs[BC_RESULTS])
            result.files.extend(write_bc_tables(bc, out_dir))
            logger.info(f"R² table written for {len(bc.results) - bc.failed} seeds")
        except Exception as e:
            bc = None
            result.errors[BC_RESULTS] = str(e)
            logger.error(f"Corrupt results file {BC_RESULTS}: {e}")

    histograms = emit_histograms(run_dir, report_config, grid, bc, manifest)
    result.files.extend(histograms.files)
    result.skipped.extend(histograms.skipped)
    result.errors.update(histograms.errors)
    return result
