"""Dynamics-model grid: schemes, conditions, training, evaluation and verdict."""

from action_signal.experiment.conditions import EvalCondition, TrainingScheme

# Heavier modules import the dataset layer, which imports ``conditions``
_LAZY = {
    "ExperimentGrid": "grid",
    "GridCell": "grid",
    "perturb_actions": "perturb",
    "train_dynamics_model": "train",
    "TrainingLog": "train",
    "evaluate_rmse": "evaluate",
    "evaluate_all_conditions": "evaluate",
    "compute_verdict": "verdict",
    "CellResult": "runner",
    "DiagnosticReport": "runner",
    "run_experiment_grid": "runner",
}

__all__ = ["EvalCondition", "TrainingScheme", *_LAZY]


def __getattr__(name):
    """Lazy import to avoid circular dependencies."""
    if name in _LAZY:
        import importlib

        module = importlib.import_module(f"action_signal.experiment.{_LAZY[name]}")
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
