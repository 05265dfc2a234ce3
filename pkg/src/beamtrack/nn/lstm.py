"""LSTM cell with explicit per-step forward and backward.

Gate layout in the fused weight matrix is ``[input, forget, candidate, output]``::

    i = sigmoid(z_i)   f = sigmoid(z_f)   g = tanh(z_g)   o = sigmoid(z_o)
    c_t = f * c_prev + i * g
    h_t = o * tanh(c_t)

with ``z = [x_t, h_prev] @ W + b``.
"""

from __future__ import annotations

import numpy as np

from .layers import Layer, glorot_uniform


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LSTMCell(Layer):
    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator | None = None, forget_bias: float = 1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        H = hidden_dim
        b = np.zeros(4 * H)
        b[H : 2 * H] = forget_bias
        self.params = {"W": glorot_uniform(rng, input_dim + H, 4 * H), "b": b}
        self.buffers = {}
        self.zero_grad()

    def initial_state(self, batch: int):
        return np.zeros((batch, self.hidden_dim)), np.zeros((batch, self.hidden_dim))

    def step(self, x, h_prev, c_prev):
        """One time step. Returns ``(h_t, c_t, cache)``.

        An integer ``x`` of shape ``(B,)`` stands for one-hot rows and is applied
        as a row gather.
        """
        onehot = np.issubdtype(np.asarray(x).dtype, np.integer)
        if onehot:
            x = np.asarray(x)
            if x.ndim != 1 or (x.size and (x.min() < 0 or x.max() >= self.input_dim)):
                raise ValueError(f"one-hot indices must be a 1-D array in [0, {self.input_dim})")
        elif x.shape[-1] != self.input_dim:
            raise ValueError(f"LSTM expects {self.input_dim} input features, got {x.shape[-1]}")
        if h_prev.shape[-1] != self.hidden_dim or c_prev.shape[-1] != self.hidden_dim:
            raise ValueError(f"LSTM state must have {self.hidden_dim} features")
        H = self.hidden_dim
        W = self.params["W"]
        x_part = W[x] if onehot else x @ W[: self.input_dim]
        z = x_part + h_prev @ W[self.input_dim :] + self.params["b"]
        s = sigmoid(z)
        i, f, o = s[..., :H], s[..., H : 2 * H], s[..., 3 * H :]
        g = np.tanh(z[..., 2 * H : 3 * H])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        return h, c, (x, h_prev, c_prev, i, f, g, o, tc)

    def step_backward(self, dh, dc, cache):
        """Back-propagate through one step; accumulates into ``grads``.

        Returns ``(dx, dh_prev, dc_prev)``; ``dx`` is ``None`` for index input.
        """
        x, h_prev, c_prev, i, f, g, o, tc = cache
        do = dh * tc
        dc = dc + dh * o * (1 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_prev = dc * f
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=-1)
        W = self.params["W"]
        if np.issubdtype(x.dtype, np.integer):
            np.add.at(self.grads["W"], x, dz)
            dx = None
        else:
            self.grads["W"][: self.input_dim] += x.T @ dz
            dx = dz @ W[: self.input_dim].T
        self.grads["W"][self.input_dim :] += h_prev.T @ dz
        self.grads["b"] += dz.sum(axis=0)
        dh_prev = dz @ W[self.input_dim :].T
        return dx, dh_prev, dc_prev


def lstm_step(cell: LSTMCell, x, h_prev, c_prev):
    h, c, _ = cell.step(np.atleast_2d(x), np.atleast_2d(h_prev), np.atleast_2d(c_prev))
    if np.ndim(x) == 1:
        return h[0], c[0]
    return h, c
