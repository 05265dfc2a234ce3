"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np


def numerical_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbing ``x`` in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """``max |a - n| / max(|a|, |n|, floor)`` over all entries."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def _check(f, pairs, h):
    """Max relative error over ``(array, analytic_grad)`` pairs for scalar ``f``."""
    return max(max_relative_error(g, numerical_gradient(f, a, h)) for a, g in pairs)


def check_dense(rng: np.random.Generator, batch: int, in_dim: int, out_dim: int, activation="linear", h=1e-5):
    from .layers import Dense

    layer = Dense(in_dim, out_dim, rng, activation)
    layer.params["b"][:] = rng.normal(size=out_dim)
    x = rng.normal(size=(batch, in_dim))
    r = rng.normal(size=(batch, out_dim))
    f = lambda: float(np.sum(layer.forward(x) * r))
    f()
    layer.zero_grad()
    dx = layer.backward(r)
    return _check(f, [(x, dx), (layer.params["W"], layer.grads["W"]), (layer.params["b"], layer.grads["b"])], h)


def check_batchnorm(rng: np.random.Generator, batch: int, dim: int, h=1e-5):
    from .layers import BatchNorm

    layer = BatchNorm(dim)
    layer.params["gamma"][:] = rng.normal(size=dim)
    layer.params["beta"][:] = rng.normal(size=dim)
    x = rng.normal(size=(batch, dim)) * rng.uniform(0.5, 3, size=dim) + rng.normal(size=dim)
    r = rng.normal(size=(batch, dim))
    f = lambda: float(np.sum(layer.forward(x, training=True) * r))
    f()
    layer.zero_grad()
    dx = layer.backward(r)
    return _check(f, [(x, dx), (layer.params["gamma"], layer.grads["gamma"]), (layer.params["beta"], layer.grads["beta"])], h)


def check_dropout(rng: np.random.Generator, batch: int, dim: int, rate: float = 0.1, h=1e-5):
    from .layers import Dropout

    seed = int(rng.integers(2**31))
    layer = Dropout(rate)
    x = rng.normal(size=(batch, dim))
    r = rng.normal(size=(batch, dim))

    def f():
        layer.rng = np.random.default_rng(seed)  # same mask every call
        return float(np.sum(layer.forward(x, training=True) * r))

    f()
    dx = layer.backward(r)
    return _check(f, [(x, dx)], h)


def check_lstm(rng: np.random.Generator, batch: int, in_dim: int, hidden: int, steps: int = 3, h=1e-5):
    """BPTT check of a loss touching every hidden state and the final cell state."""
    from .lstm import LSTMCell

    cell = LSTMCell(in_dim, hidden, rng)
    cell.params["b"][:] = rng.normal(size=4 * hidden) * 0.5
    xs = rng.normal(size=(steps, batch, in_dim))
    h0 = rng.normal(size=(batch, hidden)) * 0.5
    c0 = rng.normal(size=(batch, hidden)) * 0.5
    rh = rng.normal(size=(steps, batch, hidden))
    rc = rng.normal(size=(batch, hidden))

    def f():
        hh, cc, loss = h0, c0, 0.0
        for t in range(steps):
            hh, cc, _ = cell.step(xs[t], hh, cc)
            loss += float(np.sum(hh * rh[t]))
        return loss + float(np.sum(cc * rc))

    hh, cc, caches = h0, c0, []
    for t in range(steps):
        hh, cc, cache = cell.step(xs[t], hh, cc)
        caches.append(cache)
    cell.zero_grad()
    dxs = np.zeros_like(xs)
    dh, dc = np.zeros_like(h0), rc.copy()
    for t in reversed(range(steps)):
        dxs[t], dh, dc = cell.step_backward(dh + rh[t], dc, caches[t])
    return _check(f, [(xs, dxs), (h0, dh), (c0, dc), (cell.params["W"], cell.grads["W"]),
                      (cell.params["b"], cell.grads["b"])], h)


def check_sparse_xent(rng: np.random.Generator, batch: int, classes: int, h=1e-5):
    from .losses import sparse_xent_loss

    logits = rng.normal(size=(batch, classes)) * 2
    labels = rng.integers(0, classes, size=batch)
    _, grad = sparse_xent_loss(logits, labels)
    return _check(lambda: sparse_xent_loss(logits, labels)[0], [(logits, grad)], h)


def gradient_suite(seed: int) -> dict:
    """Run every op check on shapes drawn from ``seed``; returns op -> max relative error."""
    rng = np.random.default_rng(seed)
    d = lambda lo=2, hi=6: int(rng.integers(lo, hi + 1))
    return {
        "dense": check_dense(rng, d(), d(), d()),
        "dense_relu": check_dense(rng, d(), d(), d(), activation="relu"),
        "batchnorm": check_batchnorm(rng, d(3, 9), d()),
        "dropout": check_dropout(rng, d(), d()),
        "lstm_bptt": check_lstm(rng, d(1, 3), d(), d(2, 5), steps=d(2, 4)),
        "sparse_xent": check_sparse_xent(rng, d(), d(2, 8)),
    }
