"""Stage orchestration over a run directory keyed by the configuration hash."""

import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import pandas as pd
import yaml

from action_signal.config.schema import STAGES, RunConfig
from action_signal.core.exceptions import ActionSignalError, ResultsNotFoundError, StageError
from action_signal.data.cohort_io import read_cohort, read_sidecar, sidecar_path_for, write_cohort
from action_signal.data.trajectory import Cohort
from action_signal.reporting.manifest import RunManifest
from action_signal.utils.logger import add_run_log, logger

PathLike = Union[str, Path]

COHORT_CSV = "cohort/cohort.csv"
EVENTS_CSV = "cohort/events.csv"
PREPARED_DIR = "prepared"
CHECKPOINT_DIR = "checkpoints"
GRID_RESULTS = "results/grid.json"
BC_RESULTS = "results/bc.json"
CONFIG_FILE = "config.yaml"
RUN_LOG = "run.log"


@dataclass
class StageResult:
    """Result of a single pipeline stage."""

    stage: str
    success: bool
    files: List[str] = field(default_factory=list)
    failed_items: List[str] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None
    duration: float = 0.0


@dataclass
class PipelineSummary:
    """Summary of all stages of an invocation."""

    run_dir: Path
    results: List[StageResult]
    start_time: datetime
    end_time: datetime

    @property
    def success(self) -> bool:
        return all(r.success for r in self.results)

    @property
    def duration(self) -> float:
        """Total duration in seconds."""
        return (self.end_time - self.start_time).total_seconds()


def _files_under(directory: Path) -> List[Path]:
    return sorted(p for p in directory.rglob("*") if p.is_file())


def is_events_csv(path: PathLike) -> bool:
    """Whether a CSV holds an event stream rather than an hourly cohort."""
    header = pd.read_csv(path, nrows=0)
    return "channel" in header.columns and "time" in header.columns


def load_cohort_input(path: PathLike) -> Cohort:
    """Read an hourly cohort CSV or bin an event-stream CSV, each with its sidecar."""
    from action_signal.preprocessing.binning import cohort_from_events
    from action_signal.simulator.events import read_events

    path = Path(path)
    if not path.exists():
        raise StageError(f"input file not found: {path}")
    if is_events_csv(path):
        logger.info(f"Binning event stream {path.name}")
        return cohort_from_events(read_events(path), read_sidecar(sidecar_path_for(path)))
    return read_cohort(path)


class Pipeline:
    """Runs the diagnostic stages and records their outputs in the run manifest."""

    def __init__(self, config: RunConfig, workers: Optional[int] = None):
        """Initialize the pipeline.

        Args:
            config: Validated run configuration
            workers: Worker processes, defaults to the configured count
        """
        self.config = config
        self.workers = workers or config.workers
        self.config_hash = config.config_hash()
        self.run_dir = Path(config.output_dir) / self.config_hash[:12]
        self._manifest: Optional[RunManifest] = None

    @property
    def manifest(self) -> RunManifest:
        if self._manifest is None:
            self._manifest = RunManifest.load(self.run_dir) or RunManifest(
                self.run_dir, self.config_hash, self.config.seed
            )
        return self._manifest

    def prepare_run_dir(self) -> Path:
        """Create the run directory, attach the run log and write the config."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        if self.manifest.config_hash and self.manifest.config_hash != self.config_hash:
            raise StageError(f"run directory {self.run_dir} belongs to another configuration")
        add_run_log(os.path.abspath(self.run_dir / RUN_LOG))
        config_path = self.run_dir / CONFIG_FILE
        with open(config_path, "w", encoding="utf-8", newline="\n") as f:
            yaml.safe_dump(self.config.results_dict(), f, default_flow_style=False, sort_keys=True)
        self.manifest.record_stage("config", [config_path])
        self.manifest.save()
        return self.run_dir

    def _record(self, stage: str, files: Sequence[Path], **details: Any) -> List[str]:
        self.manifest.record_stage(stage, files, **details)
        self.manifest.save()
        return list(self.manifest.files(stage))

    def _require_stage(self, stage: str, hint: str) -> None:
        if not self.manifest.has_stage(stage):
            raise StageError(f"stage '{stage}' has not run in {self.run_dir}; {hint}")

    def _load_prepared(self):
        from action_signal.preprocessing.pipeline import PreparedData

        self._require_stage("preprocess", "run 'preprocess' with the same configuration first")
        for relative in self.manifest.files("preprocess"):
            self.manifest.require("preprocess", relative)
        return PreparedData.load(self.run_dir / PREPARED_DIR)

    def simulate(self, events: bool = False) -> StageResult:
        """Generate the synthetic cohort; optionally export its event stream."""
        from action_signal.simulator.cohort import simulate_cohort
        from action_signal.simulator.events import write_events

        cohort = simulate_cohort(self.config.simulator, workers=self.workers)
        files = list(write_cohort(cohort, self.run_dir / COHORT_CSV))
        if events:
            files.extend(write_events(cohort, self.run_dir / EVENTS_CSV))
        listed = self._record(
            "simulate", files, patients=len(cohort), hourly_steps=int(cohort.total_steps)
        )
        return StageResult("simulate", True, files=listed, details={"patients": len(cohort)})

    def preprocess(self, input_path: Optional[PathLike] = None) -> StageResult:
        """Split, impute, normalize and assemble model datasets.

        Args:
            input_path: Cohort or event-stream CSV; defaults to the simulated cohort
        """
        from action_signal.preprocessing.pipeline import prepare_cohort

        if input_path is None:
            self._require_stage("simulate", "run 'simulate' or pass --input")
            csv_path = self.manifest.require("simulate", COHORT_CSV)
            self.manifest.require("simulate", sidecar_path_for(COHORT_CSV).as_posix())
            cohort = read_cohort(csv_path)
        else:
            cohort = load_cohort_input(input_path)

        horizons = sorted(set(self.config.grid.horizons))
        prepared = prepare_cohort(cohort, self.config.preprocessing, horizons)
        files = prepared.save(
            self.run_dir / PREPARED_DIR,
            self.config.grid.metrics,
            horizons,
            self.config.model.context_length,
            self.config.preprocessing.adjacency_seed,
        )
        counts = prepared.record_counts(horizons)
        listed = self._record(
            "preprocess",
            files,
            input=str(input_path) if input_path is not None else COHORT_CSV,
            removed_long_stays=prepared.removed_long_stays,
            record_counts=counts,
        )
        return StageResult(
            "preprocess",
            True,
            files=listed,
            details={"record_counts": counts, "removed_long_stays": prepared.removed_long_stays},
        )

    def train_dynamics(self) -> StageResult:
        """Run the dynamics grid and store the diagnostic report."""
        from action_signal.experiment.runner import run_experiment_grid

        prepared = self._load_prepared()
        report = run_experiment_grid(
            prepared,
            self.config,
            checkpoint_root=self.run_dir / CHECKPOINT_DIR,
            workers=self.workers,
        )
        results_path = report.save(self.run_dir / GRID_RESULTS)
        files = [results_path]
        for result in report.cells:
            cell_dir = self.run_dir / CHECKPOINT_DIR / result.cell.name
            if cell_dir.exists():
                files.extend(_files_under(cell_dir))
        failed = [r.cell.name for r in report.cells if not r.success]
        listed = self._record("train-dynamics", files, cells=len(report.cells), failed=len(failed))
        verdict = report.verdict()
        logger.info(f"Verdict: {verdict['verdict']}")
        return StageResult(
            "train-dynamics",
            not failed,
            files=listed,
            failed_items=failed,
            details={"cells": len(report.cells), "verdict": verdict["verdict"]},
            error=f"{len(failed)} grid cell(s) failed" if failed else None,
        )

    def train_bc(self) -> StageResult:
        """Train the behavior-cloning replicates and store their R² results."""
        from action_signal.cloning.bc import bc_cell_name, run_behavior_cloning

        prepared = self._load_prepared()
        report = run_behavior_cloning(
            prepared,
            self.config,
            checkpoint_root=self.run_dir / CHECKPOINT_DIR,
            workers=self.workers,
        )
        results_path = report.save(self.run_dir / BC_RESULTS)
        files = [results_path]
        for result in report.results:
            seed_dir = self.run_dir / CHECKPOINT_DIR / bc_cell_name(result.seed)
            if seed_dir.exists():
                files.extend(_files_under(seed_dir))
        failed = [bc_cell_name(r.seed) for r in report.results if not r.success]
        listed = self._record("train-bc", files, seeds=len(report.results), failed=len(failed))
        return StageResult(
            "train-bc",
            not failed,
            files=listed,
            failed_items=failed,
            details={"seeds": len(report.results)},
            error=f"{len(failed)} behavior-cloning seed(s) failed" if failed else None,
        )

    def report(self) -> StageResult:
        """Emit tables, verdict and histograms from the manifested results."""
        from action_signal.reporting.tables import emit_report

        if not (self.manifest.has_stage("train-dynamics") or self.manifest.has_stage("train-bc")):
            raise ResultsNotFoundError("no results found")
        emission = emit_report(self.run_dir, self.config.report, manifest=self.manifest)
        listed = self._record("report", emission.files, skipped=list(emission.skipped))
        return StageResult(
            "report",
            emission.success,
            files=listed,
            failed_items=sorted(emission.errors),
            details={"skipped": list(emission.skipped)},
            error="; ".join(f"{k}: {v}" for k, v in sorted(emission.errors.items())) or None,
        )

    def run_stage(self, stage: str, **kwargs: Any) -> StageResult:
        """Run one stage; failures are returned on the result.

        ResultsNotFoundError propagates so callers can report it verbatim.
        """
        handlers: Dict[str, Callable[..., StageResult]] = {
            "simulate": self.simulate,
            "preprocess": self.preprocess,
            "train-dynamics": self.train_dynamics,
            "train-bc": self.train_bc,
            "report": self.report,
        }
        if stage not in handlers:
            raise StageError(f"unknown stage: {stage}")

        start_time = datetime.now()
        logger.info(f"Starting stage {stage} in {self.run_dir}")
        try:
            self.prepare_run_dir()
            result = handlers[stage](**kwargs)
        except ResultsNotFoundError:
            raise
        except ActionSignalError as e:
            logger.error(f"Stage {stage} failed: {e}")
            result = StageResult(stage, False, error=str(e))
        result.duration = (datetime.now() - start_time).total_seconds()
        if result.success:
            logger.info(f"Stage {stage} finished in {result.duration:.1f}s")
        else:
            logger.error(f"Stage {stage} finished with errors: {result.error}")
        return result

    def run(self, stages: Optional[Sequence[str]] = None, events: bool = False) -> PipelineSummary:
        """Run stages in pipeline order, stopping at the first stage that raises.

        Stages with failed items (grid cells, seeds) do not stop the run.
        """
        start_time = datetime.now()
        selected = [s for s in STAGES if s in (stages or self.config.stages)]
        results = []
        for stage in selected:
            kwargs = {"events": events} if stage == "simulate" else {}
            result = self.run_stage(stage, **kwargs)
            results.append(result)
            if not result.success and not result.failed_items:
                break
        return PipelineSummary(self.run_dir, results, start_time, datetime.now())
