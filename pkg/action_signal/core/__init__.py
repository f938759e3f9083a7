"""Core modules for action-signal."""

from action_signal.core.exceptions import (
    ActionSignalError,
    ConfigurationError,
    DataValidationError,
    UnknownChannelError,
    SplitError,
    HorizonOutOfRangeError,
    EventsOutOfOrderError,
    EmptyDatasetError,
    ShapeMismatchError,
    SequenceTooLongError,
    DivergenceError,
    NormalizationMismatchError,
    StageError,
    ResultsNotFoundError,
)

# Lazy imports to avoid circular dependencies
__all__ = [
    "ActionSignalError",
    "ConfigurationError",
    "DataValidationError",
    "UnknownChannelError",
    "SplitError",
    "HorizonOutOfRangeError",
    "EventsOutOfOrderError",
    "EmptyDatasetError",
    "ShapeMismatchError",
    "SequenceTooLongError",
    "DivergenceError",
    "NormalizationMismatchError",
    "StageError",
    "ResultsNotFoundError",
    "Pipeline",
    "StageResult",
]


def __getattr__(name):
    """Lazy import to avoid circular dependencies."""
    if name == "Pipeline":
        from action_signal.core.pipeline import Pipeline
        return Pipeline
    elif name == "StageResult":
        from action_signal.core.pipeline import StageResult
        return StageResult
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
