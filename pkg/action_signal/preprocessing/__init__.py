"""Hourly binning, filtering, imputation and dataset assembly."""

from action_signal.preprocessing.binning import bin_hourly, cohort_from_events, exclude_long_stays
from action_signal.preprocessing.imputation import Imputer, LocfImputer, impute_missing
from action_signal.preprocessing.dataset import (
    ModelBatch,
    ModelDataset,
    ActionBatch,
    ActionDataset,
    PreparedSplit,
    apply_scheme,
    build_model_dataset,
    build_action_dataset,
)
from action_signal.preprocessing.pipeline import PreparedData, prepare_cohort

__all__ = [
    "bin_hourly",
    "cohort_from_events",
    "exclude_long_stays",
    "Imputer",
    "LocfImputer",
    "impute_missing",
    "ModelBatch",
    "ModelDataset",
    "ActionBatch",
    "ActionDataset",
    "PreparedSplit",
    "apply_scheme",
    "build_model_dataset",
    "build_action_dataset",
    "PreparedData",
    "prepare_cohort",
]
