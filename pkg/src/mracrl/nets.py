"""Minimal multilayer perceptron with exact reverse-mode gradients.

tanh on hidden layers, identity on the output layer. Weights are stored
(fan_in, fan_out) so a batched forward pass is X @ W + b.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

Array = np.ndarray


@dataclass(eq=False)
class Mlp:
    weights: List[Array]
    biases: List[Array]

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        return [w.shape for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]


def mlp_init(sizes: Sequence[int], rng: np.random.Generator, out_scale: float = 1.0) -> Mlp:
    """Xavier-uniform init; the final layer is scaled by out_scale (small values
    keep the initial outputs near zero, which is what the action mapping expects)."""
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        if k == len(sizes) - 2:
            w *= out_scale
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return Mlp(weights=weights, biases=biases)


def _forward_cache(net: Mlp, x: Array) -> List[Array]:
    """Layer inputs for backprop: activations[k] feeds layer k; last entry is the output."""
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if k != last:
            h = np.tanh(h)
        acts.append(h)
    return acts


def mlp_forward(net: Mlp, x: Array) -> Array:
    """Forward pass; accepts a single vector (in_dim,) or a batch (B, in_dim)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != net.in_dim:
            raise ValueError(f"input has dim {x.shape[0]}, net expects {net.in_dim}")
        return _forward_cache(net, x[None, :])[-1][0]
    if x.shape[1] != net.in_dim:
        raise ValueError(f"input has dim {x.shape[1]}, net expects {net.in_dim}")
    return _forward_cache(net, x)[-1]


def mlp_gradient(net: Mlp, x: Array, upstream: Array) -> Tuple[List[Array], List[Array]]:
    """Exact gradients of upstream' output w.r.t. every weight and bias.

    Batched inputs (B, in_dim) with upstream (B, out_dim) return gradients summed
    over the batch.
    """
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
        upstream = upstream[None, :]
    if upstream.shape != (x.shape[0], net.out_dim):
        raise ValueError("upstream shape must match (batch, out_dim)")
    acts = _forward_cache(net, x)
    d_w = [np.empty_like(w) for w in net.weights]
    d_b = [np.empty_like(b) for b in net.biases]
    delta = upstream
    last = len(net.weights) - 1
    for k in range(last, -1, -1):
        d_w[k] = acts[k].T @ delta
        d_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ net.weights[k].T) * (1.0 - acts[k] ** 2)
    return d_w, d_b


class Sgd:
    """Plain gradient descent."""

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: List[Array], grads: List[Array]) -> List[Array]:
        return [p - self.lr * g for p, g in zip(params, grads)]


class Adam:
    """Adaptive-moment gradient descent; state is kept per parameter index."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: List[Array] | None = None
        self.v: List[Array] | None = None

    def step(self, params: List[Array], grads: List[Array]) -> List[Array]:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        out = []
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return Sgd(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer '{name}' (expected 'sgd' or 'adam')")
