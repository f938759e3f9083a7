"""Configuration modules."""

from action_signal.config.loader import ConfigManager, deep_merge
from action_signal.config.schema import (
    RunConfig,
    SimulatorConfig,
    PreprocessingConfig,
    DynamicsModelConfig,
    TrainingConfig,
    GridConfig,
    BehaviorCloningConfig,
    ReportConfig,
    HistogramRequest,
)

__all__ = [
    "ConfigManager",
    "deep_merge",
    "RunConfig",
    "SimulatorConfig",
    "PreprocessingConfig",
    "DynamicsModelConfig",
    "TrainingConfig",
    "GridConfig",
    "BehaviorCloningConfig",
    "ReportConfig",
    "HistogramRequest",
]
