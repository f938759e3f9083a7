"""Multi-task losses and their gradients with respect to model outputs."""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Optional

import numpy as np

if TYPE_CHECKING:
    from action_signal.nn.model import ModelOutputs
    from action_signal.preprocessing.dataset import ModelBatch


@dataclass(frozen=True)
class LossWeights:
    """Weights of the auxiliary tasks relative to the severity MSE."""

    state: float = 0.1
    terminal: float = 0.1
    adjacency: float = 0.1


@dataclass
class LossResult:
    """Scalar loss, its components and gradients of the total w.r.t. each head."""

    total: float
    components: Dict[str, float] = field(default_factory=dict)
    d_prediction: Optional[np.ndarray] = None
    d_state: Optional[np.ndarray] = None
    d_terminal: Optional[np.ndarray] = None
    d_adjacency: Optional[np.ndarray] = None


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Elementwise binary cross-entropy computed from logits."""
    return np.logaddexp(0.0, logits) - labels * logits


def compute_losses(
    outputs: "ModelOutputs", targets: "ModelBatch", weights: Optional[LossWeights] = None
) -> LossResult:
    """Total dynamics loss.

    total = MSE(severity) + w_state * MSE(state) + w_terminal * BCE(terminal)
    + w_adjacency * BCE(adjacency), where the adjacency term is averaged with
    the per-record weights (records without a feasible pair carry weight 0).
    """
    weights = weights or LossWeights()
    n = targets.target.shape[0]
    sev_err = outputs.severity - targets.target
    severity = float(np.mean(sev_err**2))

    state_err = outputs.state - targets.current_state
    state = float(np.mean(state_err**2))

    terminal = float(np.mean(bce_with_logits(outputs.terminal, targets.terminal)))

    adj_norm = max(float(np.sum(targets.adj_weight)), 1.0)
    adj_bce = bce_with_logits(outputs.adjacency, targets.adj_label)
    adjacency = float(np.sum(targets.adj_weight * adj_bce) / adj_norm)

    total = (
        severity
        + weights.state * state
        + weights.terminal * terminal
        + weights.adjacency * adjacency
    )
    return LossResult(
        total=total,
        components={
            "severity": severity,
            "state": state,
            "terminal": terminal,
            "adjacency": adjacency,
        },
        d_prediction=2.0 * sev_err / n,
        d_state=weights.state * 2.0 * state_err / state_err.size,
        d_terminal=weights.terminal * (sigmoid(outputs.terminal) - targets.terminal) / n,
        d_adjacency=weights.adjacency
        * targets.adj_weight
        * (sigmoid(outputs.adjacency) - targets.adj_label)
        / adj_norm,
    )


def action_loss(predictions: np.ndarray, targets: np.ndarray) -> LossResult:
    """Mean squared error over every dose output."""
    err = predictions - targets
    mse = float(np.mean(err**2))
    return LossResult(total=mse, components={"action": mse}, d_prediction=2.0 * err / err.size)
