"""Numpy transformer stack: parameters, layers, models, losses and Adam."""

from action_signal.nn.params import ParameterSet
from action_signal.nn.layers import (
    Dropout,
    FeedForward,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    TransformerBlock,
    TransformerLayer,
    attention_mask,
    guard_finite,
)
from action_signal.nn.losses import LossResult, LossWeights, action_loss, compute_losses
from action_signal.nn.optim import Adam, backward_and_step
from action_signal.nn.gradcheck import GradCheckResult, finite_difference_check
from action_signal.nn.tensorfile import load_tensors, read_header, save_tensors

# Models import the dataset layer, which itself imports tensorfile
_MODEL_EXPORTS = (
    "DynamicsModel",
    "BehaviorCloneModel",
    "ModelOutputs",
    "StateEncoder",
    "encoder_forward",
    "dynamics_forward",
)

__all__ = [
    "ParameterSet",
    "Dropout",
    "FeedForward",
    "LayerNorm",
    "Linear",
    "MultiHeadAttention",
    "TransformerBlock",
    "TransformerLayer",
    "attention_mask",
    "guard_finite",
    "LossResult",
    "LossWeights",
    "action_loss",
    "compute_losses",
    "Adam",
    "backward_and_step",
    "GradCheckResult",
    "finite_difference_check",
    "load_tensors",
    "read_header",
    "save_tensors",
    *_MODEL_EXPORTS,
]


def __getattr__(name):
    """Lazy import to avoid circular dependencies."""
    if name in _MODEL_EXPORTS:
        from action_signal.nn import model

        return getattr(model, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
