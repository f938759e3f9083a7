"""Configuration schema and validation."""

from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

from action_signal.core.exceptions import ConfigurationError
from action_signal.utils.hashing import canonical_json, sha256_bytes

METRICS = ("SOFA", "SIRS", "ShockIndex")
HORIZONS = (6, 12, 18)
SCHEMES = ("ActionsOnly", "StatesOnly", "StatesAndActions")
CONDITIONS = ("True", "Zero", "Shuffled", "Mean")
STAGES = ("simulate", "preprocess", "train-dynamics", "train-bc", "report")
MAX_STAY_HOURS = 336


def _build(cls, data: Optional[Dict[str, Any]], section: str):
    """Instantiate a flat config dataclass, rejecting unknown keys."""
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"Unknown keys in '{section}': {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigurationError(f"Invalid '{section}' section: {e}") from e


@dataclass
class SimulatorConfig:
    """Synthetic cohort generator knobs."""

    n_patients: int = 1000
    max_hours: int = 72
    action_effect_strength: float = 0.0
    policy_diversity: float = 1.0
    confounding: float = 0.0
    missingness_rate: float = 0.1
    vasopressor_sparsity: float = 0.5
    seed: int = 42
    n_comorbidities: int = 2
    extra_channels: int = 0
    noise_scale: float = 1.0
    # Overrides for entries of the generative constants table
    constants: Dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        """Check documented ranges.

        Raises:
            ConfigurationError: If any knob is out of range.
        """
        if self.n_patients < 1:
            raise ConfigurationError("n_patients must be >= 1")
        if not 1 <= self.max_hours <= MAX_STAY_HOURS:
            raise ConfigurationError(f"max_hours must be in [1, {MAX_STAY_HOURS}]")
        if self.action_effect_strength < 0:
            raise ConfigurationError("action_effect_strength must be >= 0")
        if self.policy_diversity < 0:
            raise ConfigurationError("policy_diversity must be >= 0")
        if not 0.0 <= self.confounding <= 1.0:
            raise ConfigurationError("confounding must be in [0, 1]")
        if not 0.0 <= self.missingness_rate < 1.0:
            raise ConfigurationError("missingness_rate must be in [0, 1)")
        if not 0.0 <= self.vasopressor_sparsity <= 1.0:
            raise ConfigurationError("vasopressor_sparsity must be in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.n_comorbidities < 0 or self.extra_channels < 0:
            raise ConfigurationError("n_comorbidities and extra_channels must be >= 0")
        if self.noise_scale < 0:
            raise ConfigurationError("noise_scale must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization."""
        return {
            "n_patients": self.n_patients,
            "max_hours": self.max_hours,
            "action_effect_strength": self.action_effect_strength,
            "policy_diversity": self.policy_diversity,
            "confounding": self.confounding,
            "missingness_rate": self.missingness_rate,
            "vasopressor_sparsity": self.vasopressor_sparsity,
            "seed": self.seed,
            "n_comorbidities": self.n_comorbidities,
            "extra_channels": self.extra_channels,
            "noise_scale": self.noise_scale,
            "constants": dict(sorted(self.constants.items())),
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "SimulatorConfig":
        """Create SimulatorConfig from dictionary."""
        config = _build(cls, data, "simulator")
        config.validate()
        return config


@dataclass
class PreprocessingConfig:
    """Split, filtering and dataset assembly settings."""

    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 7
    max_stay_hours: int = MAX_STAY_HOURS
    actions_only_keeps_demographics: bool = False
    adjacency_seed: int = 11

    def validate(self) -> None:
        if len(self.split_fractions) != 3:
            raise ConfigurationError("split_fractions needs exactly three values")
        if not 1 <= self.max_stay_hours <= MAX_STAY_HOURS:
            raise ConfigurationError(f"max_stay_hours must be in [1, {MAX_STAY_HOURS}]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "split_fractions": list(self.split_fractions),
            "split_seed": self.split_seed,
            "max_stay_hours": self.max_stay_hours,
            "actions_only_keeps_demographics": self.actions_only_keeps_demographics,
            "adjacency_seed": self.adjacency_seed,
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "PreprocessingConfig":
        config = _build(cls, data, "preprocessing")
        config.split_fractions = tuple(float(f) for f in config.split_fractions)
        config.validate()
        return config


@dataclass
class DynamicsModelConfig:
    """Transformer architecture shared by dynamics and behavior-cloning models.

    Full-scale settings from the original study are embed_dim=1024, heads=16,
    layers_per_block=4.
    """

    embed_dim: int = 64
    heads: int = 4
    layers_per_block: int = 2
    blocks: int = 2
    dropout: float = 0.1
    context_length: int = 24
    ffn_multiplier: int = 4
    state_loss_weight: float = 0.1
    terminal_loss_weight: float = 0.1
    adjacency_loss_weight: float = 0.1

    def validate(self) -> None:
        if self.embed_dim % self.heads != 0:
            raise ConfigurationError("embed_dim must be divisible by heads")
        if self.blocks != 2:
            raise ConfigurationError("blocks is fixed at 2")
        if self.layers_per_block < 1 or self.context_length < 1:
            raise ConfigurationError("layers_per_block and context_length must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0, 1)")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "embed_dim": self.embed_dim,
            "heads": self.heads,
            "layers_per_block": self.layers_per_block,
            "blocks": self.blocks,
            "dropout": self.dropout,
            "context_length": self.context_length,
            "ffn_multiplier": self.ffn_multiplier,
            "state_loss_weight": self.state_loss_weight,
            "terminal_loss_weight": self.terminal_loss_weight,
            "adjacency_loss_weight": self.adjacency_loss_weight,
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "DynamicsModelConfig":
        config = _build(cls, data, "model")
        config.validate()
        return config


@dataclass
class TrainingConfig:
    """Optimizer and early-stopping settings."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    cosine_decay: bool = True
    batch_size: int = 64
    max_epochs: int = 20
    patience: int = 5
    # 0 keeps every training record
    max_train_samples: int = 0

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("batch_size, max_epochs and patience must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "cosine_decay": self.cosine_decay,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "max_train_samples": self.max_train_samples,
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "TrainingConfig":
        config = _build(cls, data, "training")
        config.validate()
        return config


@dataclass
class GridConfig:
    """Restriction of the metric x horizon x scheme x seed grid."""

    metrics: List[str] = field(default_factory=lambda: list(METRICS))
    horizons: List[int] = field(default_factory=lambda: list(HORIZONS))
    schemes: List[str] = field(default_factory=lambda: list(SCHEMES))
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    shuffle_per_trajectory: bool = False
    # Prediction/target pairs kept per cell and condition for histograms
    retained_samples: int = 2000

    def validate(self) -> None:
        for name, values, allowed in (
            ("metrics", self.metrics, METRICS),
            ("horizons", self.horizons, HORIZONS),
            ("schemes", self.schemes, SCHEMES),
        ):
            if not values:
                raise ConfigurationError(f"grid {name} must not be empty")
            bad = [v for v in values if v not in allowed]
            if bad:
                raise ConfigurationError(f"unsupported grid {name}: {bad}")
        if not self.seeds:
            raise ConfigurationError("grid seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("grid seeds must be distinct")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metrics": list(self.metrics),
            "horizons": list(self.horizons),
            "schemes": list(self.schemes),
            "seeds": list(self.seeds),
            "shuffle_per_trajectory": self.shuffle_per_trajectory,
            "retained_samples": self.retained_samples,
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "GridConfig":
        config = _build(cls, data, "grid")
        config.horizons = [int(h) for h in config.horizons]
        config.seeds = [int(s) for s in config.seeds]
        config.validate()
        return config


@dataclass
class BehaviorCloningConfig:
    """Behavior-cloning replicate settings."""

    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    hidden_dim: int = 64
    max_horizon: int = 6
    # Dynamics checkpoint whose first transformer block seeds the encoder
    init_from_checkpoint: Optional[str] = None
    training: TrainingConfig = field(default_factory=TrainingConfig)
    retained_samples: int = 2000

    def validate(self) -> None:
        if self.max_horizon != 6:
            raise ConfigurationError("behavior cloning predicts exactly 6 hourly horizons")
        if not self.seeds:
            raise ConfigurationError("behavior_cloning seeds must not be empty")
        self.training.validate()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seeds": list(self.seeds),
            "hidden_dim": self.hidden_dim,
            "max_horizon": self.max_horizon,
            "init_from_checkpoint": self.init_from_checkpoint,
            "training": self.training.to_dict(),
            "retained_samples": self.retained_samples,
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "BehaviorCloningConfig":
        data = dict(data or {})
        training = TrainingConfig.from_dict(data.pop("training", None))
        config = _build(cls, data, "behavior_cloning")
        config.training = training
        config.validate()
        return config


@dataclass
class HistogramRequest:
    """One dynamics histogram: true vs predicted deltas for a cell aggregate."""

    metric: str
    horizon: int
    condition: str

    def to_dict(self) -> Dict[str, Any]:
        return {"metric": self.metric, "horizon": self.horizon, "condition": self.condition}


@dataclass
class ReportConfig:
    """Artifact emission settings."""

    histogram_bins: int = 50
    histogram_scheme: str = "StatesAndActions"
    histograms: List[HistogramRequest] = field(
        default_factory=lambda: [
            HistogramRequest("SOFA", 12, "True"),
            HistogramRequest("SOFA", 12, "Shuffled"),
        ]
    )
    bc_histogram_horizons: List[int] = field(default_factory=lambda: [6])

    def validate(self) -> None:
        if self.histogram_bins < 1:
            raise ConfigurationError("histogram_bins must be >= 1")
        if self.histogram_scheme not in SCHEMES:
            raise ConfigurationError(f"unsupported histogram_scheme: {self.histogram_scheme}")
        for request in self.histograms:
            if request.metric not in METRICS or request.horizon not in HORIZONS:
                raise ConfigurationError(f"unsupported histogram request: {request.to_dict()}")
            if request.condition not in CONDITIONS:
                raise ConfigurationError(f"unsupported histogram condition: {request.condition}")
        if any(not 1 <= h <= 6 for h in self.bc_histogram_horizons):
            raise ConfigurationError("bc_histogram_horizons must lie in [1, 6]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "histogram_bins": self.histogram_bins,
            "histogram_scheme": self.histogram_scheme,
            "histograms": [h.to_dict() for h in self.histograms],
            "bc_histogram_horizons": list(self.bc_histogram_horizons),
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "ReportConfig":
        data = dict(data or {})
        requests = data.pop("histograms", None)
        config = _build(cls, data, "report")
        if requests is not None:
            try:
                config.histograms = [
                    HistogramRequest(r["metric"], int(r["horizon"]), r["condition"])
                    for r in requests
                ]
            except (KeyError, TypeError) as e:
                raise ConfigurationError(f"Invalid histogram request: {e}") from e
        config.validate()
        return config


@dataclass
class RunConfig:
    """Main configuration for a diagnostic run."""

    version: str = "1.0"
    stages: List[str] = field(default_factory=lambda: list(STAGES))
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)
    preprocessing: PreprocessingConfig = field(default_factory=PreprocessingConfig)
    model: DynamicsModelConfig = field(default_factory=DynamicsModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    behavior_cloning: BehaviorCloningConfig = field(default_factory=BehaviorCloningConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    output_dir: str = "runs"
    workers: int = 1

    def validate(self) -> None:
        """Validate cross-section invariants.

        Raises:
            ConfigurationError: If the configuration is inconsistent.
        """
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigurationError(f"unknown stages: {bad}")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        for section in (
            self.simulator,
            self.preprocessing,
            self.model,
            self.training,
            self.grid,
            self.behavior_cloning,
            self.report,
        ):
            section.validate()

    @property
    def seed(self) -> int:
        """Master seed of the run (the simulator seed)."""
        return self.simulator.seed

    def results_dict(self) -> Dict[str, Any]:
        """Every field that can influence results."""
        return {
            "version": self.version,
            "simulator": self.simulator.to_dict(),
            "preprocessing": self.preprocessing.to_dict(),
            "model": self.model.to_dict(),
            "training": self.training.to_dict(),
            "grid": self.grid.to_dict(),
            "behavior_cloning": self.behavior_cloning.to_dict(),
            "report": self.report.to_dict(),
        }

    def config_hash(self) -> str:
        """SHA-256 of the result-relevant configuration."""
        return sha256_bytes(canonical_json(self.results_dict()).encode("utf-8"))

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization."""
        data = self.results_dict()
        data["stages"] = list(self.stages)
        data["output_dir"] = self.output_dir
        data["workers"] = self.workers
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Create RunConfig from dictionary.

        Args:
            data: Configuration dictionary

        Returns:
            RunConfig instance
        """
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"Unknown top-level keys: {', '.join(unknown)}")

        config = cls(
            version=str(data.get("version", "1.0")),
            stages=list(data.get("stages", STAGES)),
            simulator=SimulatorConfig.from_dict(data.get("simulator")),
            preprocessing=PreprocessingConfig.from_dict(data.get("preprocessing")),
            model=DynamicsModelConfig.from_dict(data.get("model")),
            training=TrainingConfig.from_dict(data.get("training")),
            grid=GridConfig.from_dict(data.get("grid")),
            behavior_cloning=BehaviorCloningConfig.from_dict(data.get("behavior_cloning")),
            report=ReportConfig.from_dict(data.get("report")),
            output_dir=str(data.get("output_dir", "runs")),
            workers=int(data.get("workers", 1)),
        )
        config.validate()
        return config
