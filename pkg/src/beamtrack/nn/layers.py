"""Feed-forward layers with hand-written backward passes.

Every layer keeps its trainable arrays in ``params`` and the matching
gradients in ``grads`` (same keys). ``forward`` caches what ``backward`` needs,
so a backward call must follow the forward call it differentiates.
Inputs may carry any number of leading axes; the last axis is the feature axis.
"""

from __future__ import annotations

import numpy as np


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Layer:
    params: dict
    grads: dict
    buffers: dict = {}

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def named_parameters(self, prefix: str = ""):
        for k, v in self.params.items():
            yield prefix + k, v, self.grads[k]

    def state_dict(self, prefix: str = "") -> dict:
        out = {prefix + k: v for k, v in self.params.items()}
        out.update({prefix + k: v for k, v in self.buffers.items()})
        return out

    def load_state_dict(self, state: dict, prefix: str = ""):
        for store in (self.params, self.buffers):
            for k in store:
                arr = np.asarray(state[prefix + k], dtype=float)
                if arr.shape != store[k].shape:
                    raise ValueError(f"{prefix + k}: shape {arr.shape} != {store[k].shape}")
                store[k][...] = arr


class Dense(Layer):
    """Affine map ``x @ W + b`` with an optional ReLU."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None, activation: str = "linear"):
        if activation not in ("linear", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim, self.out_dim, self.activation = in_dim, out_dim, activation
        self.params = {"W": glorot_uniform(rng, in_dim, out_dim), "b": np.zeros(out_dim)}
        self.buffers = {}
        self.zero_grad()
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"Dense expects {self.in_dim} input features, got {x.shape[-1]}")
        z = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            out = np.maximum(z, 0.0)
        else:
            out = z
        self._cache = (x, z)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, z = self._cache
        if self.activation == "relu":
            dout = dout * (z > 0)
        x2 = x.reshape(-1, self.in_dim)
        d2 = dout.reshape(-1, self.out_dim)
        self.grads["W"] += x2.T @ d2
        self.grads["b"] += d2.sum(axis=0)
        return dout @ self.params["W"].T


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` at train time."""

    def __init__(self, rate: float = 0.1, rng: np.random.Generator | None = None):
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.params, self.grads, self.buffers = {}, {}, {}
        self._mask = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if not training or self.rate == 0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout if self._mask is None else dout * self._mask


class BatchNorm(Layer):
    """Per-feature batch normalisation over all leading axes.

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``.
    """

    def __init__(self, dim: int, momentum: float = 0.99, epsilon: float = 1e-3):
        self.dim, self.momentum, self.epsilon = dim, momentum, epsilon
        self.params = {"gamma": np.ones(dim), "beta": np.zeros(dim)}
        self.buffers = {"running_mean": np.zeros(dim), "running_var": np.ones(dim)}
        self.zero_grad()
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[-1] != self.dim:
            raise ValueError(f"BatchNorm expects {self.dim} features, got {x.shape[-1]}")
        gamma, beta = self.params["gamma"], self.params["beta"]
        if not training:
            self._cache = None
            inv = 1.0 / np.sqrt(self.buffers["running_var"] + self.epsilon)
            return (x - self.buffers["running_mean"]) * (inv * gamma) + beta
        x2 = x.reshape(-1, self.dim)
        if x2.shape[0] < 2:
            raise ValueError("batch norm in training mode needs at least 2 samples")
        mean = x2.mean(axis=0)
        var = x2.var(axis=0)
        inv = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x2 - mean) * inv
        m = self.momentum
        self.buffers["running_mean"] *= m
        self.buffers["running_mean"] += (1 - m) * mean
        self.buffers["running_var"] *= m
        self.buffers["running_var"] += (1 - m) * var
        self._cache = (xhat, inv, x.shape)
        return (xhat * gamma + beta).reshape(x.shape)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            # inference-mode forward: plain affine map
            inv = 1.0 / np.sqrt(self.buffers["running_var"] + self.epsilon)
            return dout * (inv * self.params["gamma"])
        xhat, inv, shape = self._cache
        d2 = dout.reshape(-1, self.dim)
        n = d2.shape[0]
        self.grads["gamma"] += (d2 * xhat).sum(axis=0)
        self.grads["beta"] += d2.sum(axis=0)
        dxhat = d2 * self.params["gamma"]
        dx = (inv / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx.reshape(shape)


class Sequential(Layer):
    def __init__(self, layers: list):
        self.layers = list(layers)

    @property
    def params(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_parameters(self, prefix: str = ""):
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}{i}.")

    def state_dict(self, prefix: str = "") -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.state_dict(f"{prefix}{i}."))
        return out

    def load_state_dict(self, state: dict, prefix: str = ""):
        for i, layer in enumerate(self.layers):
            layer.load_state_dict(state, f"{prefix}{i}.")


def dense_block(in_dim: int, out_dim: int, rng: np.random.Generator, dropout: float = 0.1, momentum: float = 0.99,
                epsilon: float = 1e-3) -> list:
    """Dense(ReLU) followed by dropout and batch norm at its output."""
    return [
        Dense(in_dim, out_dim, rng, activation="relu"),
        Dropout(dropout, np.random.default_rng(rng.integers(2**63))),
        BatchNorm(out_dim, momentum, epsilon),
    ]
