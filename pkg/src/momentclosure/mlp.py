"""Dense ReLU network with hand-written backprop and Adam, numpy only.

Shapes follow the batched convention: inputs (batch, d_in), weights
(d_in, d_out). All arithmetic is float64 and deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mlp:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init_mlp(layer_dims: list[int], rng: np.random.Generator) -> Mlp:
    """He-uniform fan-in initialization (ReLU hidden layers), biases zero."""
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dims")
    weights, biases = [], []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return Mlp(list(layer_dims), weights, biases)


def forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Affine + ReLU chain, identity on the output layer."""
    y, _ = forward_cached(mlp, x)
    return y


def forward_cached(mlp: Mlp, x: np.ndarray):
    """Forward pass keeping per-layer inputs and ReLU masks for backprop."""
    a = np.asarray(x, dtype=float)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.shape[1] != mlp.layer_dims[0]:
        raise ValueError(f"input dim {a.shape[1]} != expected {mlp.layer_dims[0]}")
    inputs, masks = [], []
    last = mlp.n_layers - 1
    for l, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        inputs.append(a)
        z = a @ w + b
        if l < last:
            mask = z > 0
            masks.append(mask)
            a = np.where(mask, z, 0.0)
        else:
            a = z
    out = a[0] if single else a
    return out, _Cache(inputs, masks, single)


@dataclass
class _Cache:
    inputs: list[np.ndarray]
    masks: list[np.ndarray]
    single: bool


def backward(mlp: Mlp, cache: _Cache, upstream: np.ndarray) -> list[np.ndarray]:
    """Gradients of sum(output * upstream) w.r.t. [W0, b0, W1, b1, ...]."""
    delta = np.asarray(upstream, dtype=float)
    if cache.single:
        delta = delta[None, :]
    grads: list[np.ndarray] = [None] * (2 * mlp.n_layers)
    for l in range(mlp.n_layers - 1, -1, -1):
        a = cache.inputs[l]
        grads[2 * l] = a.T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ mlp.weights[l].T
            delta = np.where(cache.masks[l - 1], delta, 0.0)
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass
class Normalizer:
    """Componentwise zero-mean/unit-variance transform fitted on training inputs."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, floor: float = 1e-8) -> "Normalizer":
        x = np.asarray(x, dtype=float)
        mean = x.mean(axis=0)
        std = np.maximum(x.std(axis=0), floor)
        return cls(mean, std)

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.std + self.mean
