"""Differentiable layers over a shared :class:`ParameterSet`.

Each layer keeps the cache of its last forward call, so a layer instance is
used once per forward pass and ``backward`` must follow the matching
``forward``. Gradients are accumulated into ``params.grads``.
"""

from typing import List, Optional

import numpy as np

from action_signal.core.exceptions import DivergenceError
from action_signal.nn.params import ParameterSet

GELU_K = np.sqrt(2.0 / np.pi)
GELU_C = 0.044715


def guard_finite(array: np.ndarray, where: str) -> np.ndarray:
    """NaN guard applied after every layer output.

    Raises:
        DivergenceError: If any entry is NaN or infinite.
    """
    if not np.all(np.isfinite(array)):
        raise DivergenceError(dump={"where": where, "shape": list(array.shape)})
    return array


def softmax_last(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(GELU_K * (x + GELU_C * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(GELU_K * (x + GELU_C * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * GELU_K * (1.0 + 3.0 * GELU_C * x**2)


def attention_mask(valid: np.ndarray) -> np.ndarray:
    """Causal mask that also hides invalid keys (a query always sees itself).

    Args:
        valid: (B, T) boolean key validity

    Returns:
        (B, T, T) boolean, True where query i may attend key j
    """
    n = valid.shape[1]
    causal = np.tril(np.ones((n, n), dtype=bool))
    return causal[None, :, :] & (valid[:, None, :] | np.eye(n, dtype=bool)[None, :, :])


class Linear:
    """y = x @ W + b over the last axis."""

    def __init__(
        self,
        params: ParameterSet,
        name: str,
        n_in: int,
        n_out: int,
        rng: np.random.Generator,
        bias: bool = True,
    ):
        self.params = params
        self.name = name
        self.has_bias = bias
        params.add(f"{name}.W", rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out)))
        if bias:
            params.add(f"{name}.b", np.zeros(n_out))
        self._x: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        y = x @ self.params[f"{self.name}.W"]
        if self.has_bias:
            y = y + self.params[f"{self.name}.b"]
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        W = self.params[f"{self.name}.W"]
        x2 = self._x.reshape(-1, W.shape[0])
        dy2 = dy.reshape(-1, W.shape[1])
        self.params.accumulate(f"{self.name}.W", x2.T @ dy2)
        if self.has_bias:
            self.params.accumulate(f"{self.name}.b", dy2.sum(axis=0))
        return dy @ W.T


class LayerNorm:
    """Normalization over the last axis with learnable scale and shift."""

    def __init__(self, params: ParameterSet, name: str, dim: int, eps: float = 1e-5):
        self.params = params
        self.name = name
        self.eps = eps
        params.add(f"{name}.gamma", np.ones(dim))
        params.add(f"{name}.beta", np.zeros(dim))
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        sigma = np.sqrt(var + self.eps)
        xhat = (x - mu) / sigma
        self._cache = (xhat, sigma)
        return xhat * self.params[f"{self.name}.gamma"] + self.params[f"{self.name}.beta"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, sigma = self._cache
        gamma = self.params[f"{self.name}.gamma"]
        axes = tuple(range(dy.ndim - 1))
        self.params.accumulate(f"{self.name}.gamma", (dy * xhat).sum(axis=axes))
        self.params.accumulate(f"{self.name}.beta", dy.sum(axis=axes))
        ghat = dy * gamma
        m1 = ghat.mean(axis=-1, keepdims=True)
        m2 = (ghat * xhat).mean(axis=-1, keepdims=True)
        return (ghat - m1 - xhat * m2) / sigma


class MultiHeadAttention:
    """Masked multi-head self-attention.

    Masked scores are set to -inf before the softmax, so masked weights are
    exactly zero.
    """

    def __init__(
        self, params: ParameterSet, name: str, dim: int, heads: int, rng: np.random.Generator
    ):
        self.heads = heads
        self.head_dim = dim // heads
        self.q = Linear(params, f"{name}.q", dim, dim, rng)
        self.k = Linear(params, f"{name}.k", dim, dim, rng)
        self.v = Linear(params, f"{name}.v", dim, dim, rng)
        self.o = Linear(params, f"{name}.o", dim, dim, rng)
        self._cache = None

    def _split(self, x: np.ndarray) -> np.ndarray:
        B, T, _ = x.shape
        return x.reshape(B, T, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    @staticmethod
    def _merge(x: np.ndarray) -> np.ndarray:
        B, H, T, d = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, H * d)

    def forward(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """
        Args:
            x: (B, T, D) tokens
            mask: (B, T, T) boolean, True where attention is allowed

        Returns:
            (B, T, D)
        """
        Q = self._split(self.q.forward(x))
        K = self._split(self.k.forward(x))
        V = self._split(self.v.forward(x))
        scale = 1.0 / np.sqrt(self.head_dim)
        scores = np.where(mask[:, None, :, :], (Q @ K.transpose(0, 1, 3, 2)) * scale, -np.inf)
        P = softmax_last(scores)
        out = P @ V
        self._cache = (Q, K, V, P, scale)
        return self.o.forward(self._merge(out))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        Q, K, V, P, scale = self._cache
        d_out = self._split(self.o.backward(dy))
        dV = P.transpose(0, 1, 3, 2) @ d_out
        dP = d_out @ V.transpose(0, 1, 3, 2)
        dS = (dP - (dP * P).sum(axis=-1, keepdims=True)) * P
        dQ = (dS @ K) * scale
        dK = (dS.transpose(0, 1, 3, 2) @ Q) * scale
        return (
            self.q.backward(self._merge(dQ))
            + self.k.backward(self._merge(dK))
            + self.v.backward(self._merge(dV))
        )


class FeedForward:
    """Linear, tanh-approximated GELU, Linear."""

    def __init__(
        self, params: ParameterSet, name: str, dim: int, hidden: int, rng: np.random.Generator
    ):
        self.fc1 = Linear(params, f"{name}.fc1", dim, hidden, rng)
        self.fc2 = Linear(params, f"{name}.fc2", hidden, dim, rng)
        self._u: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._u = self.fc1.forward(x)
        return self.fc2.forward(gelu(self._u))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self.fc1.backward(self.fc2.backward(dy) * gelu_grad(self._u))


class Dropout:
    """Inverted dropout; identity outside training."""

    def __init__(self, rate: float):
        self.rate = rate
        self._mask: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray, train: bool, rng: Optional[np.random.Generator]) -> np.ndarray:
        if not train or self.rate == 0.0 or rng is None:
            self._mask = None
            return x
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy if self._mask is None else dy * self._mask


class TransformerLayer:
    """Pre-LayerNorm residual layer: x + Attn(LN(x)), then x + FFN(LN(x))."""

    def __init__(
        self,
        params: ParameterSet,
        name: str,
        dim: int,
        heads: int,
        ffn_hidden: int,
        dropout: float,
        rng: np.random.Generator,
    ):
        self.name = name
        self.ln1 = LayerNorm(params, f"{name}.ln1", dim)
        self.attn = MultiHeadAttention(params, f"{name}.attn", dim, heads, rng)
        self.drop1 = Dropout(dropout)
        self.ln2 = LayerNorm(params, f"{name}.ln2", dim)
        self.ffn = FeedForward(params, f"{name}.ffn", dim, ffn_hidden, rng)
        self.drop2 = Dropout(dropout)

    def forward(self, x: np.ndarray, mask: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        x = x + self.drop1.forward(self.attn.forward(self.ln1.forward(x), mask), train, rng)
        x = x + self.drop2.forward(self.ffn.forward(self.ln2.forward(x)), train, rng)
        return guard_finite(x, self.name)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx = dy + self.ln2.backward(self.ffn.backward(self.drop2.backward(dy)))
        return dx + self.ln1.backward(self.attn.backward(self.drop1.backward(dx)))


class TransformerBlock:
    """Stack of transformer layers followed by a final LayerNorm."""

    def __init__(
        self,
        params: ParameterSet,
        name: str,
        n_layers: int,
        dim: int,
        heads: int,
        ffn_hidden: int,
        dropout: float,
        rng: np.random.Generator,
    ):
        self.layers: List[TransformerLayer] = [
            TransformerLayer(params, f"{name}.layer{i}", dim, heads, ffn_hidden, dropout, rng)
            for i in range(n_layers)
        ]
        self.ln_f = LayerNorm(params, f"{name}.ln_f", dim)

    def forward(self, x: np.ndarray, mask: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, mask, train, rng)
        return self.ln_f.forward(x)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx = self.ln_f.backward(dy)
        for layer in reversed(self.layers):
            dx = layer.backward(dx)
        return dx
