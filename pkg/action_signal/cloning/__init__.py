"""Behavior cloning of clinician doses and its R² evaluation."""

from action_signal.cloning.bc import (
    BCReport,
    BCSeedResult,
    evaluate_r2,
    pearson_r_squared,
    r_squared,
    run_behavior_cloning,
    train_behavior_clone,
)

__all__ = [
    "BCReport",
    "BCSeedResult",
    "evaluate_r2",
    "pearson_r_squared",
    "r_squared",
    "run_behavior_cloning",
    "train_behavior_clone",
]
