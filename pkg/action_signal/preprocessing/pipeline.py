"""Cohort to model-ready splits: filter, split, impute, normalize, assemble."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from action_signal.config.schema import PreprocessingConfig
from action_signal.core.exceptions import EmptyDatasetError
from action_signal.data.normalization import NormalizationStats, fit_normalization
from action_signal.data.split import split_cohort
from action_signal.data.trajectory import Cohort
from action_signal.preprocessing.binning import exclude_long_stays
from action_signal.preprocessing.dataset import (
    ModelDataset,
    PreparedSplit,
    build_model_dataset,
)
from action_signal.preprocessing.imputation import LocfImputer, impute_missing
from action_signal.utils.logger import logger

SPLIT_NAMES = ("train", "val", "test")
STATS_FILE = "stats.json"
SUMMARY_FILE = "summary.json"

PathLike = Union[str, Path]


def dataset_file_name(split: str, metric: str, horizon: int) -> str:
    return f"{split}_{metric}_{horizon}h.tensors"


@dataclass
class PreparedData:
    """Scaled splits, their statistics and preprocessing bookkeeping."""

    splits: Dict[str, PreparedSplit]
    stats: NormalizationStats
    removed_long_stays: int = 0
    warnings: List[str] = field(default_factory=list)
    # Set when loaded from disk: (directory, context_length, adjacency_seed) of stored records
    stored: Optional[tuple] = None

    @property
    def train(self) -> PreparedSplit:
        return self.splits["train"]

    @property
    def val(self) -> PreparedSplit:
        return self.splits["val"]

    @property
    def test(self) -> PreparedSplit:
        return self.splits["test"]

    def record_counts(self, horizons: Sequence[int]) -> Dict[str, Dict[str, int]]:
        """Dataset sizes per split and horizon: sum over patients of max(0, len - h)."""
        return {
            name: {f"{h}h": int(sum(max(0, int(n) - h) for n in split.lengths)) for h in horizons}
            for name, split in self.splits.items()
        }

    def dataset(
        self,
        split: str,
        metric: str,
        horizon: int,
        scheme: str,
        context_length: int,
        adjacency_seed: int = 11,
        keep_demographics: bool = False,
    ) -> ModelDataset:
        """Records of one split, read from the stored record file when it matches.

        Raises:
            EmptyDatasetError: If the split has no record at this horizon.
        """
        if self.stored is not None:
            directory, stored_context, stored_seed = self.stored
            path = Path(directory) / "datasets" / dataset_file_name(split, metric, horizon)
            if stored_context == context_length and stored_seed == adjacency_seed and path.exists():
                return ModelDataset.load(path, self.splits[split], scheme, keep_demographics)
        return build_model_dataset(
            self.splits[split],
            horizon,
            metric,
            self.stats,
            scheme,
            context_length=context_length,
            adjacency_seed=adjacency_seed,
            keep_demographics=keep_demographics,
        )

    def save(
        self,
        directory: PathLike,
        metrics: Sequence[str],
        horizons: Sequence[int],
        context_length: int,
        adjacency_seed: int = 11,
    ) -> List[Path]:
        """Write splits, statistics, a summary and record files per (split, metric, horizon).

        Returns:
            Written file paths
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = [split.save(directory / f"{name}.tensors") for name, split in self.splits.items()]

        stats_path = directory / STATS_FILE
        self.stats.save(stats_path)
        written.append(stats_path)

        for name in SPLIT_NAMES:
            for metric in metrics:
                for horizon in horizons:
                    try:
                        dataset = self.dataset(
                            name,
                            metric,
                            horizon,
                            "StatesAndActions",
                            context_length,
                            adjacency_seed,
                        )
                    except EmptyDatasetError:
                        logger.warning(f"No {metric} records at {horizon}h in the {name} split")
                        continue
                    target = directory / "datasets" / dataset_file_name(name, metric, horizon)
                    written.append(dataset.save(target))

        summary = {
            "patients": {name: split.n_patients for name, split in self.splits.items()},
            "record_counts": self.record_counts(horizons),
            "removed_long_stays": self.removed_long_stays,
            "context_length": context_length,
            "adjacency_seed": adjacency_seed,
            "stats_fingerprint": self.stats.fingerprint(),
            "warnings": list(self.warnings),
        }
        summary_path = directory / SUMMARY_FILE
        with open(summary_path, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        written.append(summary_path)
        return written

    @classmethod
    def load(cls, directory: PathLike) -> "PreparedData":
        directory = Path(directory)
        with open(directory / SUMMARY_FILE, "r", encoding="utf-8") as f:
            summary = json.load(f)
        return cls(
            splits={
                name: PreparedSplit.load(directory / f"{name}.tensors") for name in SPLIT_NAMES
            },
            stats=NormalizationStats.load(directory / STATS_FILE),
            removed_long_stays=int(summary.get("removed_long_stays", 0)),
            warnings=list(summary.get("warnings", [])),
            stored=(str(directory), summary.get("context_length"), summary.get("adjacency_seed")),
        )


def prepare_cohort(
    cohort: Cohort,
    config: PreprocessingConfig,
    horizons: Sequence[int] = (6, 12, 18),
) -> PreparedData:
    """Run the preprocessing pipeline on a binned cohort.

    Long stays are dropped, the cohort is split at patient level, the imputer
    and the normalization statistics are fitted on the training split only and
    every split is scaled with them.

    Args:
        cohort: Binned cohort with missing-value masks
        config: Preprocessing configuration
        horizons: Horizons needing severity-delta statistics

    Returns:
        PreparedData
    """
    kept, removed = exclude_long_stays(list(cohort), config.max_stay_hours)
    train, val, test = split_cohort(kept, config.split_fractions, config.split_seed)
    logger.info(f"Split {len(kept)} patients into {len(train)}/{len(val)}/{len(test)}")

    imputer = LocfImputer().fit(train, cohort.schema.observation_channels)
    completed = {
        name: impute_missing(part, imputer)
        for name, part in zip(SPLIT_NAMES, (train, val, test))
    }
    for part in completed.values():
        for traj in part:
            traj.validate_preprocessed()

    stats = fit_normalization(
        completed["train"],
        cohort.schema.observation_channels,
        cohort.schema.demographic_channels,
        horizons,
    )
    splits = {
        name: PreparedSplit.from_trajectories(name, part, stats)
        for name, part in completed.items()
    }
    return PreparedData(
        splits=splits,
        stats=stats,
        removed_long_stays=removed,
        warnings=list(imputer.warnings) + list(stats.warnings),
    )
