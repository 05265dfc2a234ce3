"""RMSprop and Adam.

Both operate in place on a mapping ``name -> ndarray`` of parameters and keep
their per-parameter state keyed by the same names.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    rho: float = 0.9  # RMSprop decay
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.kind not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def optimizer_step(config: OptimizerConfig, params: dict, grads: dict, state: dict) -> None:
    """Apply one update to ``params`` in place and advance ``state``."""
    if config.kind == "adam":
        t = state.get("t", 0) + 1
        state["t"] = t
        bc1 = 1 - config.beta1**t
        bc2 = 1 - config.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} does not match parameter {p.shape}")
        if config.kind == "rmsprop":
            acc = state.setdefault(("acc", name), np.zeros_like(p))
            acc *= config.rho
            acc += (1 - config.rho) * g * g
            p -= config.learning_rate * g / (np.sqrt(acc) + config.epsilon)
        else:
            m = state.setdefault(("m", name), np.zeros_like(p))
            v = state.setdefault(("v", name), np.zeros_like(p))
            m *= config.beta1
            m += (1 - config.beta1) * g
            v *= config.beta2
            v += (1 - config.beta2) * g * g
            p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)


class Optimizer:
    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.state: dict = {}

    def step(self, named_parameters) -> None:
        params, grads = {}, {}
        for name, p, g in named_parameters:
            params[name] = p
            grads[name] = g
        optimizer_step(self.config, params, grads, self.state)
