"""Adam with bias correction and optional cosine learning-rate decay."""

import math
from typing import Any, Optional, Protocol

import numpy as np

from action_signal.config.schema import TrainingConfig
from action_signal.core.exceptions import DivergenceError
from action_signal.nn.losses import LossResult
from action_signal.nn.params import ParameterSet


class Trainable(Protocol):
    """A model exposing its parameters and a loss-with-gradients pass."""

    params: ParameterSet

    def loss(
        self, batch: Any, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> LossResult:
        ...

    def loss_and_grads(
        self, batch: Any, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> LossResult:
        ...


class Adam:
    """Adam over every tensor of a :class:`ParameterSet`.

    Moment buffers live in the parameter set so checkpoints can carry them.
    """

    def __init__(
        self,
        params: ParameterSet,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        total_steps: int = 0,
        cosine_decay: bool = False,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.total_steps = total_steps
        self.cosine_decay = cosine_decay

    @classmethod
    def from_config(cls, params: ParameterSet, config: TrainingConfig, total_steps: int) -> "Adam":
        return cls(
            params,
            learning_rate=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.adam_eps,
            total_steps=total_steps,
            cosine_decay=config.cosine_decay,
        )

    def current_lr(self) -> float:
        """Learning rate for the next step."""
        if not self.cosine_decay or self.total_steps <= 0:
            return self.learning_rate
        progress = min(self.params.step_count / self.total_steps, 1.0)
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))

    def step(self) -> None:
        lr = self.current_lr()
        self.params.step_count += 1
        t = self.params.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, value in self.params.values.items():
            g = self.params.grads[name]
            m = self.params.first_moment[name]
            v = self.params.second_moment[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def backward_and_step(
    model: Trainable,
    batch: Any,
    optimizer: Adam,
    rng: Optional[np.random.Generator] = None,
) -> LossResult:
    """One training step: forward, loss, reverse-mode gradients, Adam update.

    Raises:
        DivergenceError: If the loss or any gradient is non-finite. The
            parameters are left untouched and the dump names the step and
            the loss components.
    """
    result = model.loss_and_grads(batch, train=True, rng=rng)
    if not math.isfinite(result.total):
        raise DivergenceError(
            "divergence detected",
            dump={
                "step": model.params.step_count,
                "loss": result.total,
                "components": dict(result.components),
                "learning_rate": optimizer.current_lr(),
            },
        )
    try:
        model.params.check_finite()
    except DivergenceError as e:
        e.dump.update({"loss": result.total, "components": dict(result.components)})
        raise
    optimizer.step()
    return result
