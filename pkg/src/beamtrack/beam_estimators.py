"""Baseline beam alignment: noise-free oracle, noisy exhaustive sweep, and an
MLP classifier from phase-less PN measurements (two instances, one per
measurement budget).

All beam indices returned here are 1-based. Ties go to the smallest index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .array_signal import PencilCodebook, steering_matrix
from .channel_mobility import LosChannelState, channel_vector
from .measurement import MeasurementVector, NoiseModel, normalize_rows
from .nn import Dense, Optimizer, OptimizerConfig, Sequential, dense_block, load_weights, save_weights, softmax
from .nn import sparse_xent_loss

log = logging.getLogger(__name__)

SOURCES = ("exhaustive", "oracle", "mmrapid1", "mmrapid2", "lstm")


@dataclass(frozen=True)
class BeamEstimate:
    beam_index: int
    source: str
    time_step: int = 0
    measurements_used: int = 0

    def __post_init__(self):
        if self.beam_index < 1:
            raise ValueError(f"beam index must be >= 1, got {self.beam_index}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown estimate source {self.source!r}")


def oracle_beams(aoas, codebook: PencilCodebook) -> np.ndarray:
    """Noise-free best beam (1-based) for each angle of arrival."""
    a = np.atleast_1d(np.asarray(aoas, dtype=float))
    gains = codebook.gains(steering_matrix(codebook.geometry, a.ravel()))
    return (np.argmax(gains, axis=-1) + 1).reshape(a.shape)


def oracle_best_beam(channel_state: LosChannelState, codebook: PencilCodebook) -> BeamEstimate:
    k = int(oracle_beams([channel_state.aoa], codebook)[0])
    return BeamEstimate(k, "oracle", channel_state.time_step)


def exhaustive_sweep(channels: np.ndarray, codebook: PencilCodebook, noise: NoiseModel, symbols=None) -> np.ndarray:
    """Noisy sweep of every pencil beam for each channel in ``channels`` ``(S, N_r)``.

    Each beam sees its own noise vector ``n_k``. Returns 1-based indices ``(S,)``.
    """
    channels = np.atleast_2d(channels)
    S = channels.shape[0]
    K, n_r = codebook.num_beams, codebook.geometry.num_elements
    s = np.ones(K) if symbols is None else np.asarray(symbols)
    vh = codebook.columns.conj()
    clean = (channels @ vh) * s
    n = noise.draw((S, K, n_r))
    rss = np.abs(clean + np.einsum("skn,nk->sk", n, vh))
    return np.argmax(rss, axis=-1) + 1


def exhaustive_search(channel_state: LosChannelState, codebook: PencilCodebook, noise: NoiseModel,
                      symbols=None) -> BeamEstimate:
    h = channel_vector(channel_state, codebook.geometry)
    k = int(exhaustive_sweep(h[None, :], codebook, noise, symbols)[0])
    return BeamEstimate(k, "exhaustive", channel_state.time_step, codebook.num_beams)


# ---------------------------------------------------------------------------
# MLP classifier


@dataclass(frozen=True)
class MmRapidConfig:
    hidden: tuple = (128, 64)
    dropout: float = 0.1
    batch_size: int = 64
    max_epochs: int = 300
    patience: int = 10
    validation_fraction: float = 0.1
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig("rmsprop", 1e-3))
    seed: int = 0


class MmRapidModel:
    """Unit-norm input -> [Dense(ReLU) -> Dropout -> BatchNorm] x len(hidden) -> Dense(K)."""

    def __init__(self, input_dim: int, num_beams: int, instance: int = 1, hidden=(128, 64), dropout: float = 0.1,
                 seed: int = 0):
        if input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        self.input_dim, self.num_beams, self.instance = input_dim, num_beams, instance
        self.hidden = tuple(hidden)
        rng = np.random.default_rng(seed)
        layers, prev = [], input_dim
        for width in self.hidden:
            layers += dense_block(prev, width, rng, dropout)
            prev = width
        layers.append(Dense(prev, num_beams, rng))
        self.net = Sequential(layers)

    @property
    def source(self) -> str:
        return f"mmrapid{self.instance}"

    def _features(self, measurements) -> np.ndarray:
        x = np.atleast_2d(np.asarray(measurements, dtype=float))
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"model expects {self.input_dim} measurements, got {x.shape[-1]}")
        return normalize_rows(x)

    def logits(self, measurements) -> np.ndarray:
        return self.net.forward(self._features(measurements), training=False)

    def predict_proba(self, measurements) -> np.ndarray:
        return softmax(self.logits(measurements))

    def predict_indices(self, measurements) -> np.ndarray:
        """1-based beam indices for a batch of raw (unnormalised) measurement rows."""
        return np.argmax(self.logits(measurements), axis=-1) + 1

    def save(self, path) -> None:
        header = {"instance": self.instance, "input_dim": self.input_dim, "K": self.num_beams,
                  "hidden": list(self.hidden)}
        save_weights(path, self.net.state_dict(), header)

    @classmethod
    def load(cls, path) -> "MmRapidModel":
        tensors, header = load_weights(path)
        model = cls(header["input_dim"], header["K"], header["instance"], header.get("hidden", (128, 64)))
        model.net.load_state_dict(tensors)
        return model


def mmrapid_predict(model: MmRapidModel, measurement_vector: MeasurementVector | np.ndarray,
                    time_step: int = 0) -> BeamEstimate:
    if isinstance(measurement_vector, MeasurementVector):
        time_step = measurement_vector.time_step
        values = measurement_vector.values
    else:
        values = measurement_vector
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError("mmrapid_predict takes a single measurement vector; use predict_indices for batches")
    k = int(model.predict_indices(values)[0])
    return BeamEstimate(k, model.source, time_step, len(values))


def _accuracy(model: MmRapidModel, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.argmax(model.net.forward(x, training=False), axis=-1) == y))


def train_mmrapid(features, labels, instance: int = 1, config: MmRapidConfig | None = None,
                  num_beams: int = 128) -> MmRapidModel:
    """Fit the classifier on raw RSS rows and 1-based beam labels.

    A ``validation_fraction`` of the rows is held out for early stopping on
    validation accuracy; the best-scoring weights are restored at the end.
    """
    config = config or MmRapidConfig()
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or len(features) == 0:
        raise ValueError("train_mmrapid needs a non-empty 2-D feature array")
    if len(labels) != len(features):
        raise ValueError("features and labels lengths differ")
    model = MmRapidModel(features.shape[1], num_beams, instance, config.hidden, config.dropout, config.seed)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7,)))
    x = model._features(features)
    y = labels - 1

    order = rng.permutation(len(x))
    n_val = int(round(config.validation_fraction * len(x)))
    if len(x) - n_val < 2:
        n_val = 0
    val_idx, tr_idx = order[:n_val], order[n_val:]
    x_tr, y_tr = x[tr_idx], y[tr_idx]
    x_val, y_val = (x[val_idx], y[val_idx]) if n_val else (x_tr, y_tr)

    opt = Optimizer(config.optimizer)
    best_acc, best_state, stale = -1.0, None, 0
    for epoch in range(config.max_epochs):
        perm = rng.permutation(len(x_tr))
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            if len(idx) < 2:
                continue
            model.net.zero_grad()
            logits = model.net.forward(x_tr[idx], training=True)
            _, dlogits = sparse_xent_loss(logits, y_tr[idx])
            model.net.backward(dlogits)
            opt.step(model.net.named_parameters())
        acc = _accuracy(model, x_val, y_val)
        if acc > best_acc:
            best_acc, stale = acc, 0
            best_state = {k: v.copy() for k, v in model.net.state_dict().items()}
        else:
            stale += 1
            if stale >= config.patience:
                break
    log.info("mmRAPID #%d: %d epochs, best validation accuracy %.4f", instance, epoch + 1, best_acc)
    model.net.load_state_dict(best_state)
    return model
