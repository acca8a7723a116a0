"""Feed-forward networks with hand-written reverse-mode gradients.

Weights are stored as ``(fan_in, fan_out)`` so a batch ``V`` of shape
``(B, fan_in)`` maps to ``V @ W + b``. The activation is applied after every
layer except the last, which stays linear.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh")


@dataclass
class MLPParams:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output size")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of weight blocks does not match layer_sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[k], self.layer_sizes[k + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {k}: expected {shape}, got {w.shape} / {b.shape}")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params())


def init_mlp(layer_sizes, activation: str = "relu", rng=None) -> MLPParams:
    """He-uniform (relu) or Glorot-uniform (tanh) weights, zero biases."""
    rng = np.random.default_rng(rng)
    sizes = tuple(int(s) for s in layer_sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if activation == "relu":
            bound = np.sqrt(6.0 / fan_in)
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(sizes, weights, biases, activation)


def zeros_mlp(layer_sizes, activation: str = "relu") -> MLPParams:
    sizes = tuple(int(s) for s in layer_sizes)
    return MLPParams(sizes, [np.zeros((i, o)) for i, o in zip(sizes[:-1], sizes[1:])],
                     [np.zeros(o) for o in sizes[1:]], activation)


@dataclass
class MLPCache:
    inputs: list[np.ndarray] = field(default_factory=list)   # input to each layer
    preacts: list[np.ndarray] = field(default_factory=list)  # hidden pre-activations
    single: bool = False
    squeeze: bool = False


def mlp_forward(net: MLPParams, v) -> tuple[np.ndarray | float, MLPCache]:
    """Evaluate ``net`` on a vector ``(in,)`` or a batch ``(B, in)``.

    Scalar-output nets return a float (single input) or a ``(B,)`` array.
    """
    a = np.asarray(v, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != net.in_dim:
        raise ValueError(f"input width {a.shape[-1]} does not match network input {net.in_dim}")
    cache = MLPCache(single=single, squeeze=net.out_dim == 1)
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(a)
        with np.errstate(over="ignore", invalid="ignore"):  # checked below
            z = a @ w
            z += b
        if k == last:
            a = z
        else:
            cache.preacts.append(z)
            a = np.maximum(z, 0.0) if net.activation == "relu" else np.tanh(z)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite value in network output")
    if cache.squeeze:
        a = a[:, 0]
    if single:
        a = a[0]
        return (float(a) if cache.squeeze else a), cache
    return a, cache


def mlp_backward(net: MLPParams, cache: MLPCache | None, upstream) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse pass: gradients of ``sum(upstream * output)``.

    Returns ``(grads, dv)`` where ``grads`` is aligned with ``net.params()``
    (batch contributions summed) and ``dv`` has the input's shape. The relu
    subgradient at 0 is 0.
    """
    if cache is None or not cache.inputs:
        raise ValueError("mlp_backward needs the cache from mlp_forward")
    g = np.asarray(upstream, dtype=np.float64)
    if cache.single:
        g = g[None]
    if cache.squeeze:
        g = g.reshape(-1, 1)
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))  # type: ignore[list-item]
    for k in range(len(net.weights) - 1, -1, -1):
        a = cache.inputs[k]
        grads[2 * k] = a.T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ net.weights[k].T
        if k > 0:
            z = cache.preacts[k - 1]
            if net.activation == "relu":
                g *= z > 0
            else:
                t = np.tanh(z)
                g *= 1.0 - t * t
    return grads, (g[0] if cache.single else g)


def min_abs_preact(cache: MLPCache) -> float:
    """Distance of the closest hidden pre-activation to the relu kink."""
    if not cache.preacts:
        return np.inf
    return float(min(np.abs(z).min() for z in cache.preacts))
