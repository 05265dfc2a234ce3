"""Encoder-decoder LSTM beam predictor.

The encoder reads ``T`` unit-normalised ``M_L``-long RSS vectors. The decoder
starts from the encoder's final ``(h, c)`` and is unrolled for ``T - 1 + P``
steps. Its input at each step is the one-hot beam index of the previous frame
step, and its output at step ``j`` is a distribution over the beam of frame
step ``j + 1``. The first ``T - 1`` outputs overlap the history window and are
discarded at operation time; the last ``P`` are the predictions.

Frame steps are numbered 1..T+P below, matching the decoder/estimate tables.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .beam_estimators import BeamEstimate, MmRapidModel
from .measurement import SensingPlan, normalize_rows
from .nn import Dense, LSTMCell, Optimizer, OptimizerConfig, Sequential, dense_block, load_weights, save_weights
from .nn import softmax, sparse_xent_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackerConfig:
    history_len: int = 7
    prediction_len: int = 2
    m_loop: int = 5
    num_beams: int = 128
    encoder_hidden: int = 64
    decoder_hidden: int = 64
    dense_hidden: int = 64
    dropout: float = 0.1
    decoder_input_mode: str = "onehot"
    teacher_forcing: bool = True
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 10
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig("adam", 1e-3))
    seed: int = 0

    def __post_init__(self):
        if self.history_len < 2 or self.prediction_len < 1:
            raise ValueError(f"need T >= 2 and P >= 1, got T={self.history_len}, P={self.prediction_len}")
        if min(self.encoder_hidden, self.decoder_hidden, self.dense_hidden) < 1:
            raise ValueError("hidden dimensions must be >= 1")
        if self.encoder_hidden != self.decoder_hidden:
            raise ValueError("the decoder is initialised with the encoder state, so hidden sizes must match")
        if self.decoder_input_mode != "onehot":
            raise ValueError(f"unsupported decoder_input_mode {self.decoder_input_mode!r}")

    @property
    def decoder_steps(self) -> int:
        return self.history_len - 1 + self.prediction_len


@dataclass(frozen=True, eq=False)
class FramePrediction:
    kept: np.ndarray  # P beam indices, 1-based
    discarded: np.ndarray  # T-1 beam indices, 1-based
    distributions: np.ndarray  # (T-1+P, K)


class TrackerModel:
    def __init__(self, config: TrackerConfig):
        self.config = c = config
        rng = np.random.default_rng(np.random.SeedSequence(c.seed, spawn_key=(11,)))
        self.enc_in = Sequential(dense_block(c.m_loop, c.dense_hidden, rng, c.dropout))
        self.encoder = LSTMCell(c.dense_hidden, c.encoder_hidden, rng)
        self.decoder = LSTMCell(c.num_beams, c.decoder_hidden, rng)
        self.dec_out = Sequential(dense_block(c.decoder_hidden, c.dense_hidden, rng, c.dropout))
        self.head = Dense(c.dense_hidden, c.num_beams, rng)

    # parameter plumbing -------------------------------------------------------

    def _parts(self):
        return (("enc_in.", self.enc_in), ("encoder.", self.encoder), ("decoder.", self.decoder),
                ("dec_out.", self.dec_out), ("head.", self.head))

    def zero_grad(self):
        for _, part in self._parts():
            part.zero_grad()

    def named_parameters(self):
        for prefix, part in self._parts():
            yield from part.named_parameters(prefix)

    def state_dict(self) -> dict:
        out = {}
        for prefix, part in self._parts():
            out.update(part.state_dict(prefix))
        return out

    def load_state_dict(self, state: dict):
        for prefix, part in self._parts():
            part.load_state_dict(state, prefix)

    def save(self, path) -> None:
        c = self.config
        header = {"T": c.history_len, "P": c.prediction_len, "M_L": c.m_loop, "K": c.num_beams,
                  "encoder_hidden": c.encoder_hidden, "decoder_hidden": c.decoder_hidden,
                  "dense_hidden": c.dense_hidden}
        save_weights(path, self.state_dict(), header)

    @classmethod
    def load(cls, path) -> "TrackerModel":
        tensors, h = load_weights(path)
        model = cls(TrackerConfig(h["T"], h["P"], h["M_L"], h["K"], h["encoder_hidden"], h["decoder_hidden"],
                                  h["dense_hidden"]))
        model.load_state_dict(tensors)
        return model

    # forward pieces -----------------------------------------------------------

    def _onehot(self, idx0: np.ndarray) -> np.ndarray:
        out = np.zeros((len(idx0), self.config.num_beams))
        out[np.arange(len(idx0)), idx0] = 1.0
        return out

    def encode(self, x: np.ndarray, training: bool = False):
        """``x``: (B, T, M_L) unit-norm rows. Returns final ``(h, c)`` and step caches."""
        e = self.enc_in.forward(x, training)
        h, c = self.encoder.initial_state(x.shape[0])
        caches = []
        for t in range(x.shape[1]):
            h, c, cache = self.encoder.step(e[:, t], h, c)
            caches.append(cache)
        return h, c, caches

    def _logits_from_hidden(self, hs: np.ndarray, training: bool) -> np.ndarray:
        return self.head.forward(self.dec_out.forward(hs, training), training)

    def decode(self, h, c, seed0: np.ndarray, known0: np.ndarray | None = None) -> np.ndarray:
        """Autoregressive inference decode; indices are 0-based here.

        ``known0`` (B, k) feeds decoder steps 2..k+1; later steps feed back
        their own previous argmax. Returns logits (B, T-1+P, K).
        """
        S = self.config.decoder_steps
        prev = np.asarray(seed0, dtype=np.int64)
        n_known = 0 if known0 is None else known0.shape[1]
        out = np.empty((len(prev), S, self.config.num_beams))
        for s in range(S):
            h, c, _ = self.decoder.step(prev, h, c)
            out[:, s] = self._logits_from_hidden(h, training=False)
            prev = known0[:, s] if s < n_known else np.argmax(out[:, s], axis=-1)
        return out

    # training -----------------------------------------------------------------

    def loss_and_grad(self, x: np.ndarray, labels0: np.ndarray, training: bool = True) -> float:
        """Teacher-forced summed cross-entropy over all decoder outputs.

        ``labels0``: (B, T+P) 0-based beam labels for frame steps 1..T+P.
        Gradients are accumulated into the model's ``grads``.
        """
        S = self.config.decoder_steps
        B = x.shape[0]
        h, c, enc_caches = self.encode(x, training)
        dec_caches, hs = [], np.empty((B, S, self.config.decoder_hidden))
        for s in range(S):
            h, c, cache = self.decoder.step(labels0[:, s], h, c)
            dec_caches.append(cache)
            hs[:, s] = h
        logits = self._logits_from_hidden(hs, training)
        dlogits = np.empty_like(logits)
        loss = 0.0
        for s in range(S):
            l, dlogits[:, s] = sparse_xent_loss(logits[:, s], labels0[:, s + 1])
            loss += l
        dhs = self.dec_out.backward(self.head.backward(dlogits))
        dh = np.zeros((B, self.config.decoder_hidden))
        dc = np.zeros_like(dh)
        for s in reversed(range(S)):
            _, dh, dc = self.decoder.step_backward(dh + dhs[:, s], dc, dec_caches[s])
        de = np.empty((B, x.shape[1], self.config.dense_hidden))
        for t in reversed(range(x.shape[1])):
            de[:, t], dh, dc = self.encoder.step_backward(dh, dc, enc_caches[t])
        self.enc_in.backward(de)
        return loss

    def eval_loss(self, x: np.ndarray, labels0: np.ndarray, batch_size: int = 1024) -> float:
        """Mean per-frame teacher-forced loss in inference mode (no state changes)."""
        total = 0.0
        S = self.config.decoder_steps
        for start in range(0, len(x), batch_size):
            xb, lb = x[start : start + batch_size], labels0[start : start + batch_size]
            h, c, _ = self.encode(xb)
            hs = np.empty((len(xb), S, self.config.decoder_hidden))
            for s in range(S):
                h, c, _ = self.decoder.step(lb[:, s], h, c)
                hs[:, s] = h
            logits = self._logits_from_hidden(hs, training=False)
            for s in range(S):
                total += sparse_xent_loss(logits[:, s], lb[:, s + 1])[0] * len(xb)
        return total / len(x)


def _check_unit_rows(x: np.ndarray, tol: float = 1e-6):
    norms = np.linalg.norm(x, axis=-1)
    if np.any(np.abs(norms - 1) > tol):
        raise ValueError("encoder inputs must be unit-normalised")


def encode_history(model: TrackerModel, measurements) -> tuple[np.ndarray, np.ndarray]:
    """Run the encoder over one frame's ``T`` unit-norm history vectors."""
    x = np.asarray(measurements, dtype=float)
    c = model.config
    if x.shape != (c.history_len, c.m_loop):
        raise ValueError(f"expected history of shape {(c.history_len, c.m_loop)}, got {x.shape}")
    _check_unit_rows(x)
    h, cell, _ = model.encode(x[None])
    return h[0], cell[0]


def decode_predict(model: TrackerModel, encoder_state, seed_index: int, known_indices=None) -> FramePrediction:
    c = model.config
    if not 1 <= seed_index <= c.num_beams:
        raise ValueError(f"seed index {seed_index} outside [1, {c.num_beams}]")
    known0 = None
    if known_indices is not None:
        known = np.asarray(known_indices, dtype=np.int64)
        if known.shape != (c.history_len - 2,):
            raise ValueError(f"expected {c.history_len - 2} known indices, got {known.shape}")
        if known.size and (known.min() < 1 or known.max() > c.num_beams):
            raise ValueError("known index out of range")
        known0 = known[None] - 1
    h, cell = (np.atleast_2d(v) for v in encoder_state)
    logits = model.decode(h, cell, np.array([seed_index - 1]), known0)[0]
    probs = softmax(logits)
    idx = np.argmax(probs, axis=-1) + 1
    T1 = c.history_len - 1
    return FramePrediction(kept=idx[T1:], discarded=idx[:T1], distributions=probs)


@dataclass(frozen=True)
class TrainingHistory:
    train_loss: list
    val_loss: list
    best_epoch: int


def train_tracker(model: TrackerModel, x, labels, x_val=None, labels_val=None,
                  max_epochs: int | None = None) -> TrainingHistory:
    """Adam on teacher-forced cross-entropy, early stopping on validation loss.

    Args:
        x: (N, T, M_L) raw or normalised RSS; rows are normalised here.
        labels: (N, T+P) 1-based exhaustive-search labels for every frame step.
        x_val, labels_val: validation frames; defaults to the training set.

    The model is updated in place to the best validation epoch.
    """
    cfg = model.config
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("train_tracker needs at least one frame")
    if x.shape[1:] != (cfg.history_len, cfg.m_loop) or labels.shape != (len(x), cfg.history_len + cfg.prediction_len):
        raise ValueError(f"frame shape mismatch: x {x.shape}, labels {labels.shape}")
    x = normalize_rows(x)
    y0 = labels - 1
    if x_val is None:
        xv, yv0 = x, y0
    else:
        xv, yv0 = normalize_rows(np.asarray(x_val, dtype=float)), np.asarray(labels_val, dtype=np.int64) - 1

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(13,)))
    opt = Optimizer(cfg.optimizer)
    train_hist, val_hist = [], []
    best, best_state, best_epoch, stale = np.inf, None, 0, 0
    for epoch in range(max_epochs or cfg.max_epochs):
        perm = rng.permutation(len(x))
        total, count = 0.0, 0
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            model.zero_grad()
            total += model.loss_and_grad(x[idx], y0[idx]) * len(idx)
            count += len(idx)
            opt.step(model.named_parameters())
        train_hist.append(total / max(count, 1))
        val = model.eval_loss(xv, yv0)
        val_hist.append(val)
        log.info("tracker epoch %d: train %.4f val %.4f", epoch + 1, train_hist[-1], val)
        if val < best:
            best, best_epoch, stale = val, epoch, 0
            best_state = {k: v.copy() for k, v in model.state_dict().items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    return TrainingHistory(train_hist, val_hist, best_epoch)


# ---------------------------------------------------------------------------
# Operation


@dataclass(frozen=True, eq=False)
class BatchPrediction:
    """Per-step 1-based beam indices for a batch of frames, both variants.

    ``full``: mmRAPID #1, mmRAPID #2 x (T-1), LSTM x P.
    ``lstm``: mmRAPID #1, then LSTM outputs for the remaining T-1+P steps.
    """

    full: np.ndarray
    lstm: np.ndarray
    mmrapid: np.ndarray  # mmRAPID estimates over the history window, (N, T)


def predict_frames(tracker: TrackerModel, mmrapid1: MmRapidModel, mmrapid2: MmRapidModel, initial, loop,
                   plan: SensingPlan) -> BatchPrediction:
    """Batched operation over ``N`` frames.

    Args:
        initial: (N, M_I) raw RSS of frame step 1.
        loop: (N, T-1, M_L) raw RSS of frame steps 2..T.
    """
    initial = np.atleast_2d(np.asarray(initial, dtype=float))
    loop = np.asarray(loop, dtype=float)
    T, P = plan.history_len, plan.prediction_len
    N = len(initial)
    if initial.shape[1] != plan.m_initial or loop.shape != (N, T - 1, plan.m_loop):
        raise ValueError(f"measurements do not follow plan {plan}: initial {initial.shape}, loop {loop.shape}")
    cfg = tracker.config
    if (cfg.history_len, cfg.prediction_len, cfg.m_loop) != (T, P, plan.m_loop):
        raise ValueError("tracker configuration does not match the sensing plan")

    k1 = mmrapid1.predict_indices(initial)
    k2 = mmrapid2.predict_indices(loop.reshape(-1, plan.m_loop)).reshape(N, T - 1)
    history = normalize_rows(np.concatenate([initial[:, None, : plan.m_loop], loop], axis=1))
    h, c, _ = tracker.encode(history)
    logits = tracker.decode(h, c, k1 - 1, k2[:, : T - 2] - 1)
    dec = np.argmax(logits, axis=-1) + 1
    mm = np.concatenate([k1[:, None], k2], axis=1)
    full = np.concatenate([mm, dec[:, T - 1 :]], axis=1)
    lstm = np.concatenate([k1[:, None], dec], axis=1)
    return BatchPrediction(full, lstm, mm)


def predict_frame(tracker: TrackerModel, mmrapid1: MmRapidModel, mmrapid2: MmRapidModel, measurements,
                  plan: SensingPlan, start_step: int = 0) -> list[BeamEstimate]:
    """Full algorithm for one frame.

    ``measurements`` is a list of ``T + P`` RSS vectors: ``M_I`` values at step 1,
    ``M_L`` at steps 2..T and none in the prediction window.
    """
    T, P = plan.history_len, plan.prediction_len
    if len(measurements) != T + P:
        raise ValueError(f"expected {T + P} step vectors, got {len(measurements)}")
    lens = [len(np.atleast_1d(getattr(m, "values", m))) if m is not None else 0 for m in measurements]
    expected = [plan.m_initial] + [plan.m_loop] * (T - 1) + [0] * P
    if lens != expected:
        raise ValueError(f"measurement counts {lens} do not follow the plan {expected}")
    vals = [np.asarray(getattr(m, "values", m), dtype=float) for m in measurements[:T]]
    pred = predict_frames(tracker, mmrapid1, mmrapid2, vals[0][None], np.stack(vals[1:])[None], plan)
    sources = ["mmrapid1"] + ["mmrapid2"] * (T - 1) + ["lstm"] * P
    used = expected
    return [BeamEstimate(int(k), src, start_step + i, used[i]) for i, (k, src) in enumerate(zip(pred.full[0], sources))]
