"""Two-block transformer dynamics model and the behavior-cloning model.

Block 1 encodes the state history (state and demographic embeddings plus
learned positions). Block 2 reads the block-1 outputs followed by one token
per future action and predicts from its final token.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from action_signal.config.schema import DynamicsModelConfig
from action_signal.core.exceptions import (
    NormalizationMismatchError,
    SequenceTooLongError,
    ShapeMismatchError,
)
from action_signal.experiment.conditions import TrainingScheme
from action_signal.nn.layers import (
    Linear,
    TransformerBlock,
    attention_mask,
    gelu,
    gelu_grad,
    guard_finite,
)
from action_signal.nn.losses import LossResult, LossWeights, action_loss, compute_losses
from action_signal.nn.params import ParameterSet
from action_signal.nn.tensorfile import load_tensors, save_tensors
from action_signal.preprocessing.dataset import ActionBatch, ActionDataset, ModelBatch, ModelDataset

N_ACTIONS = 2

PathLike = Union[str, Path]


@dataclass
class ModelOutputs:
    """Raw heads of the dynamics model for a batch."""

    severity: np.ndarray  # (B,) z-scaled delta prediction
    state: np.ndarray  # (B, C) current-state reconstruction
    terminal: np.ndarray  # (B,) logit
    adjacency: np.ndarray  # (B,) logit


class StateEncoder:
    """First transformer block over the state history."""

    def __init__(
        self,
        params: ParameterSet,
        name: str,
        config: DynamicsModelConfig,
        n_channels: int,
        n_demographics: int,
        rng: np.random.Generator,
    ):
        dim = config.embed_dim
        self.params = params
        self.name = name
        self.context_length = config.context_length
        self.state_embed = Linear(params, f"{name}.state", n_channels, dim, rng)
        self.demo_embed = Linear(params, f"{name}.demo", n_demographics, dim, rng)
        params.add(f"{name}.pos", rng.normal(0.0, 0.02, size=(config.context_length, dim)))
        self.block = TransformerBlock(
            params,
            f"{name}.block",
            config.layers_per_block,
            dim,
            config.heads,
            config.ffn_multiplier * dim,
            config.dropout,
            rng,
        )
        self._length = 0

    def forward(
        self,
        states: np.ndarray,
        valid: np.ndarray,
        demographics: np.ndarray,
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """
        Args:
            states: (B, T, C) history; the last position is the anchor
            valid: (B, T) positions holding real hours
            demographics: (B, D)

        Returns:
            (B, T, D) per-timestep embeddings

        Raises:
            SequenceTooLongError: If T exceeds the context length.
        """
        length = states.shape[1]
        if length > self.context_length:
            raise SequenceTooLongError(f"sequence too long: {length} > {self.context_length}")
        self._length = length
        # Positions are right-aligned so the anchor always takes the last embedding
        pos = self.params[f"{self.name}.pos"][self.context_length - length :]
        demo = self.demo_embed.forward(demographics)[:, None, :]
        x = self.state_embed.forward(states) + demo + pos
        return guard_finite(self.block.forward(x, attention_mask(valid), train, rng), self.name)

    def backward(self, d_embeddings: np.ndarray) -> None:
        dx = self.block.backward(d_embeddings)
        pos_grad = np.zeros_like(self.params[f"{self.name}.pos"])
        pos_grad[self.context_length - self._length :] = dx.sum(axis=0)
        self.params.accumulate(f"{self.name}.pos", pos_grad)
        self.state_embed.backward(dx)
        self.demo_embed.backward(dx.sum(axis=1))


class DynamicsModel:
    """Severity-delta predictor with three auxiliary heads.

    The model owns its training scheme: StatesOnly models always see zero
    (training-mean) actions and ActionsOnly models zeroed states, so test-time
    substitutions cannot leak into inputs a scheme never trained on.
    """

    def __init__(
        self,
        config: DynamicsModelConfig,
        n_channels: int,
        n_demographics: int,
        horizon: int,
        scheme: Union[str, TrainingScheme] = TrainingScheme.STATES_AND_ACTIONS,
        seed: int = 0,
        keep_demographics: bool = False,
        stats_fingerprint: str = "",
    ):
        config.validate()
        self.config = config
        self.n_channels = n_channels
        self.n_demographics = n_demographics
        self.horizon = int(horizon)
        self.scheme = TrainingScheme(scheme)
        self.seed = seed
        self.keep_demographics = keep_demographics
        self.stats_fingerprint = stats_fingerprint
        self.weights = LossWeights(
            state=config.state_loss_weight,
            terminal=config.terminal_loss_weight,
            adjacency=config.adjacency_loss_weight,
        )

        dim = config.embed_dim
        rng = np.random.default_rng(seed)
        self.params = ParameterSet()
        self.encoder = StateEncoder(self.params, "enc", config, n_channels, n_demographics, rng)
        self.action_embed = Linear(self.params, "act.embed", N_ACTIONS, dim, rng)
        self.params.add("act.pos", rng.normal(0.0, 0.02, size=(self.horizon, dim)))
        self.fusion = TransformerBlock(
            self.params,
            "dyn.block",
            config.layers_per_block,
            dim,
            config.heads,
            config.ffn_multiplier * dim,
            config.dropout,
            rng,
        )
        self.severity_head = Linear(self.params, "head.severity", dim, 1, rng)
        self.terminal_head = Linear(self.params, "head.terminal", dim, 1, rng)
        self.state_head = Linear(self.params, "head.state", dim, n_channels, rng)
        self.adjacency_head = Linear(self.params, "head.adjacency", 2 * dim, 1, rng)
        self._cache: Dict[str, Any] = {}

    # Forward passes

    def _neutralize(self, states, demographics, actions):
        if not self.scheme.uses_actions:
            actions = np.zeros_like(actions)
        if not self.scheme.uses_states:
            states = np.zeros_like(states)
            if not self.keep_demographics:
                demographics = np.zeros_like(demographics)
        return states, demographics, actions

    def encoder_forward(
        self,
        states: np.ndarray,
        demographics: np.ndarray,
        valid: Optional[np.ndarray] = None,
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """Per-timestep history embeddings, (B, T, D)."""
        if valid is None:
            valid = np.ones(states.shape[:2], dtype=bool)
        return self.encoder.forward(states, valid, demographics, train, rng)

    def dynamics_forward(
        self,
        embeddings: np.ndarray,
        actions: np.ndarray,
        valid: Optional[np.ndarray] = None,
        adj_partner: Optional[np.ndarray] = None,
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> ModelOutputs:
        """Fuse history embeddings with future actions and apply the heads.

        Raises:
            ShapeMismatchError: If actions are not (B, horizon, 2).
        """
        B, T, _ = embeddings.shape
        if actions.shape != (B, self.horizon, N_ACTIONS):
            raise ShapeMismatchError(
                f"action tensor shape mismatch: {actions.shape} != {(B, self.horizon, N_ACTIONS)}"
            )
        if valid is None:
            valid = np.ones((B, T), dtype=bool)
        if adj_partner is None:
            adj_partner = np.full(B, T - 1, dtype=np.int64)

        action_tokens = self.action_embed.forward(actions) + self.params["act.pos"]
        tokens = np.concatenate([embeddings, action_tokens], axis=1)
        token_valid = np.concatenate([valid, np.ones((B, self.horizon), dtype=bool)], axis=1)
        fused = self.fusion.forward(tokens, attention_mask(token_valid), train, rng)

        final = fused[:, -1, :]
        anchor = embeddings[:, -1, :]
        rows = np.arange(B)
        pair = np.concatenate([anchor, embeddings[rows, adj_partner]], axis=1)
        self._cache = {"B": B, "T": T, "adj_partner": adj_partner, "tokens": tokens.shape}
        return ModelOutputs(
            severity=self.severity_head.forward(final)[:, 0],
            state=self.state_head.forward(anchor),
            terminal=self.terminal_head.forward(final)[:, 0],
            adjacency=self.adjacency_head.forward(pair)[:, 0],
        )

    def forward(
        self, batch: ModelBatch, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> ModelOutputs:
        states, demographics, actions = self._neutralize(
            batch.states, batch.demographics, batch.actions
        )
        embeddings = self.encoder_forward(states, demographics, batch.valid, train, rng)
        return self.dynamics_forward(
            embeddings, actions, batch.valid, batch.adj_partner, train, rng
        )

    # Backward pass

    def backward(self, loss: LossResult) -> None:
        """Accumulate parameter gradients of ``loss.total`` from the last forward."""
        B, T = self._cache["B"], self._cache["T"]
        adj_partner = self._cache["adj_partner"]
        D = self.config.embed_dim

        d_final = self.severity_head.backward(loss.d_prediction[:, None])
        d_final += self.terminal_head.backward(loss.d_terminal[:, None])
        d_fused = np.zeros(self._cache["tokens"])
        d_fused[:, -1, :] = d_final
        d_tokens = self.fusion.backward(d_fused)

        d_actions = d_tokens[:, T:, :]
        self.params.accumulate("act.pos", d_actions.sum(axis=0))
        self.action_embed.backward(d_actions)

        d_embeddings = d_tokens[:, :T, :].copy()
        d_embeddings[:, -1, :] += self.state_head.backward(loss.d_state)
        d_pair = self.adjacency_head.backward(loss.d_adjacency[:, None])
        d_embeddings[:, -1, :] += d_pair[:, :D]
        d_embeddings[np.arange(B), adj_partner] += d_pair[:, D:]
        self.encoder.backward(d_embeddings)

    def loss(
        self, batch: ModelBatch, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> LossResult:
        return compute_losses(self.forward(batch, train, rng), batch, self.weights)

    def loss_and_grads(
        self, batch: ModelBatch, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> LossResult:
        """Total loss with freshly accumulated gradients in ``params.grads``."""
        result = self.loss(batch, train, rng)
        self.params.zero_grad()
        self.backward(result)
        return result

    # Inference

    def predict(self, dataset: ModelDataset, batch_size: int = 512) -> np.ndarray:
        """Eval-mode severity predictions for every record, in z-units.

        Raises:
            NormalizationMismatchError: If the records use other statistics.
        """
        if self.stats_fingerprint and dataset.stats_fingerprint != self.stats_fingerprint:
            raise NormalizationMismatchError("normalization mismatch")
        out = np.empty(len(dataset), dtype=np.float64)
        for start in range(0, len(dataset), batch_size):
            idx = np.arange(start, min(start + batch_size, len(dataset)))
            out[idx] = self.forward(dataset.batch(idx)).severity
        return out

    # Checkpoints

    def header(self) -> Dict[str, Any]:
        return {
            "kind": "dynamics",
            "config": self.config.to_dict(),
            "n_channels": self.n_channels,
            "n_demographics": self.n_demographics,
            "horizon": self.horizon,
            "scheme": self.scheme.value,
            "seed": self.seed,
            "keep_demographics": self.keep_demographics,
            "stats_fingerprint": self.stats_fingerprint,
            "step_count": self.params.step_count,
        }

    def save(self, path: PathLike, extra: Optional[Dict[str, Any]] = None) -> Path:
        meta = self.header()
        meta.update(extra or {})
        return save_tensors(path, self.params.state(), meta)

    @classmethod
    def load(cls, path: PathLike) -> "DynamicsModel":
        tensors, meta = load_tensors(path)
        model = cls(
            DynamicsModelConfig.from_dict(meta["config"]),
            n_channels=int(meta["n_channels"]),
            n_demographics=int(meta["n_demographics"]),
            horizon=int(meta["horizon"]),
            scheme=meta["scheme"],
            seed=int(meta["seed"]),
            keep_demographics=bool(meta["keep_demographics"]),
            stats_fingerprint=meta["stats_fingerprint"],
        )
        model.params.load_state(tensors)
        model.params.step_count = int(meta.get("step_count", 0))
        return model


def encoder_forward(
    model: DynamicsModel,
    states: np.ndarray,
    demographics: np.ndarray,
    valid: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Eval-mode block-1 embeddings of a state history."""
    return model.encoder_forward(states, demographics, valid)


def dynamics_forward(
    model: DynamicsModel, embeddings: np.ndarray, actions: np.ndarray
) -> ModelOutputs:
    """Eval-mode block-2 outputs for history embeddings and future actions."""
    return model.dynamics_forward(embeddings, actions)


class BehaviorCloneModel:
    """State encoder followed by a two-layer feed-forward dose head.

    Predicts 12 values: (fluid, vasopressor) for each of the next six hours,
    horizon-major.
    """

    def __init__(
        self,
        config: DynamicsModelConfig,
        n_channels: int,
        n_demographics: int,
        hidden_dim: int = 64,
        n_outputs: int = 12,
        seed: int = 0,
        stats_fingerprint: str = "",
    ):
        config.validate()
        self.config = config
        self.n_channels = n_channels
        self.n_demographics = n_demographics
        self.hidden_dim = hidden_dim
        self.n_outputs = n_outputs
        self.seed = seed
        self.stats_fingerprint = stats_fingerprint

        rng = np.random.default_rng(seed)
        self.params = ParameterSet()
        self.encoder = StateEncoder(self.params, "enc", config, n_channels, n_demographics, rng)
        self.fc1 = Linear(self.params, "bc.fc1", config.embed_dim, hidden_dim, rng)
        self.fc2 = Linear(self.params, "bc.fc2", hidden_dim, n_outputs, rng)
        self._cache: Dict[str, Any] = {}

    def forward(
        self, batch: ActionBatch, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> np.ndarray:
        """(B, 12) z-scaled log-dose predictions."""
        embeddings = self.encoder.forward(
            batch.states, batch.valid, batch.demographics, train, rng
        )
        hidden = self.fc1.forward(embeddings[:, -1, :])
        self._cache = {"shape": embeddings.shape, "hidden": hidden}
        return self.fc2.forward(gelu(hidden))

    def backward(self, loss: LossResult) -> None:
        d_hidden = self.fc2.backward(loss.d_prediction) * gelu_grad(self._cache["hidden"])
        d_embeddings = np.zeros(self._cache["shape"])
        d_embeddings[:, -1, :] = self.fc1.backward(d_hidden)
        self.encoder.backward(d_embeddings)

    def loss(
        self, batch: ActionBatch, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> LossResult:
        return action_loss(self.forward(batch, train, rng), batch.targets)

    def loss_and_grads(
        self, batch: ActionBatch, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> LossResult:
        result = self.loss(batch, train, rng)
        self.params.zero_grad()
        self.backward(result)
        return result

    def predict(self, dataset: ActionDataset, batch_size: int = 512) -> np.ndarray:
        """Eval-mode predictions, (N, 12)."""
        if self.stats_fingerprint and dataset.stats_fingerprint != self.stats_fingerprint:
            raise NormalizationMismatchError("normalization mismatch")
        out = np.empty((len(dataset), self.n_outputs), dtype=np.float64)
        for start in range(0, len(dataset), batch_size):
            idx = np.arange(start, min(start + batch_size, len(dataset)))
            out[idx] = self.forward(dataset.batch(idx))
        return out

    def init_encoder_from(self, checkpoint: PathLike) -> int:
        """Copy the first transformer block of a dynamics checkpoint.

        Returns:
            Number of tensors copied

        Raises:
            ShapeMismatchError: If the encoder shapes differ.
        """
        tensors, meta = load_tensors(checkpoint)
        stored = meta.get("stats_fingerprint")
        if self.stats_fingerprint and stored not in ("", self.stats_fingerprint):
            raise NormalizationMismatchError("normalization mismatch")
        return len(self.params.load_state(tensors, prefix="enc."))

    def header(self) -> Dict[str, Any]:
        return {
            "kind": "behavior_clone",
            "config": self.config.to_dict(),
            "n_channels": self.n_channels,
            "n_demographics": self.n_demographics,
            "hidden_dim": self.hidden_dim,
            "n_outputs": self.n_outputs,
            "seed": self.seed,
            "stats_fingerprint": self.stats_fingerprint,
            "step_count": self.params.step_count,
        }

    def save(self, path: PathLike, extra: Optional[Dict[str, Any]] = None) -> Path:
        meta = self.header()
        meta.update(extra or {})
        return save_tensors(path, self.params.state(), meta)

    @classmethod
    def load(cls, path: PathLike) -> "BehaviorCloneModel":
        tensors, meta = load_tensors(path)
        model = cls(
            DynamicsModelConfig.from_dict(meta["config"]),
            n_channels=int(meta["n_channels"]),
            n_demographics=int(meta["n_demographics"]),
            hidden_dim=int(meta["hidden_dim"]),
            n_outputs=int(meta["n_outputs"]),
            seed=int(meta["seed"]),
            stats_fingerprint=meta["stats_fingerprint"],
        )
        model.params.load_state(tensors)
        model.params.step_count = int(meta.get("step_count", 0))
        return model
