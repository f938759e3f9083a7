"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np

from action_signal.core.exceptions import ConfigurationError
from action_signal.nn.optim import Trainable

REL_ERROR_FLOOR = 1e-3
MAX_CHECKED_PARAMETERS = 10_000


@dataclass
class GradCheckResult:
    """Worst relative error overall and per parameter tensor."""

    max_rel_error: float
    worst_parameter: str
    per_parameter: Dict[str, float] = field(default_factory=dict)
    n_checked: int = 0


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.abs(numeric), REL_ERROR_FLOOR)


def finite_difference_check(
    model: Trainable,
    batch: Any,
    epsilon: float = 1e-4,
    grad_transform: Optional[Callable[[Dict[str, np.ndarray]], None]] = None,
) -> GradCheckResult:
    """Compare analytic gradients with (L(θ+ε) − L(θ−ε)) / 2ε for every parameter entry.

    The model runs in eval mode. ``grad_transform`` may edit the analytic
    gradients in place before comparison (used to inject faults).

    Args:
        model: Model with ``params``, ``loss`` and ``loss_and_grads``
        batch: Batch the loss is evaluated on
        epsilon: Perturbation size

    Returns:
        GradCheckResult

    Raises:
        ConfigurationError: If the model has more than MAX_CHECKED_PARAMETERS
    """
    n_parameters = model.params.n_parameters
    if n_parameters > MAX_CHECKED_PARAMETERS:
        raise ConfigurationError(
            f"gradient check needs at most {MAX_CHECKED_PARAMETERS} parameters, got {n_parameters}"
        )
    model.loss_and_grads(batch)
    analytic = {name: g.copy() for name, g in model.params.grads.items()}
    if grad_transform is not None:
        grad_transform(analytic)

    per_parameter: Dict[str, float] = {}
    n_checked = 0
    for name, value in model.params.values.items():
        numeric = np.empty_like(value)
        flat = value.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            plus = model.loss(batch).total
            flat[i] = original - epsilon
            minus = model.loss(batch).total
            flat[i] = original
            num_flat[i] = (plus - minus) / (2.0 * epsilon)
        per_parameter[name] = (
            float(relative_error(analytic[name], numeric).max()) if value.size else 0.0
        )
        n_checked += value.size

    worst = max(per_parameter, key=per_parameter.get)
    model.params.zero_grad()
    return GradCheckResult(
        max_rel_error=per_parameter[worst],
        worst_parameter=worst,
        per_parameter=per_parameter,
        n_checked=n_checked,
    )
