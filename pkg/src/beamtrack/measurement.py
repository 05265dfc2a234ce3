"""Phase-less RSS measurements with the PN sensing codebook.

A measurement with codeword ``w`` is ``|w^H h s + w^H n|`` where
``n ~ CN(0, sigma^2 I)``. We fix ``sigma = 1`` and ``s = 1`` and let the
channel amplitude carry the SNR, so the per-antenna SNR of a state is
``exp(2 * log_amplitude) / sigma^2``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .array_signal import PnCodebook
from .channel_mobility import LosChannelState, channel_vector


class Phase(str, enum.Enum):
    INITIAL = "initial"
    LOOP = "loop"
    PREDICTION = "prediction"


@dataclass
class NoiseModel:
    sigma: float = 1.0
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.rng is None:
            self.rng = np.random.default_rng(0)

    def draw(self, shape) -> np.ndarray:
        """Circular complex Gaussian samples with ``E|n|^2 = sigma^2``."""
        if self.sigma == 0:
            return np.zeros(shape, dtype=complex)
        z = self.rng.standard_normal((*np.atleast_1d(shape), 2))
        return (self.sigma / math.sqrt(2)) * (z[..., 0] + 1j * z[..., 1])


@dataclass(frozen=True)
class SensingPlan:
    m_initial: int
    m_loop: int
    history_len: int
    prediction_len: int

    def __post_init__(self):
        if not self.m_initial >= self.m_loop >= 1:
            raise ValueError(f"need M_I >= M_L >= 1, got M_I={self.m_initial}, M_L={self.m_loop}")
        if self.history_len < 2:
            raise ValueError(f"history_len must be >= 2, got {self.history_len}")
        if self.prediction_len < 1:
            raise ValueError(f"prediction_len must be >= 1, got {self.prediction_len}")

    @property
    def frame_len(self) -> int:
        return self.history_len + self.prediction_len

    @property
    def measurements_per_frame(self) -> int:
        return self.m_initial + self.m_loop * (self.history_len - 1)

    def phase_of(self, step: int) -> Phase:
        """Phase of 0-based frame step ``step``."""
        if step == 0:
            return Phase.INITIAL
        if step < self.history_len:
            return Phase.LOOP
        return Phase.PREDICTION

    def count(self, phase: Phase) -> int:
        return {Phase.INITIAL: self.m_initial, Phase.LOOP: self.m_loop, Phase.PREDICTION: 0}[Phase(phase)]


@dataclass(frozen=True, eq=False)
class MeasurementVector:
    values: np.ndarray
    codeword_indices: tuple
    time_step: int = 0

    def __post_init__(self):
        if len(self.values) != len(self.codeword_indices):
            raise ValueError("values and codeword_indices lengths differ")
        if np.any(np.asarray(self.values) < 0):
            raise ValueError("RSS values must be non-negative")

    def __len__(self):
        return len(self.values)


def phaseless_measure(codeword, channel, symbol: complex = 1.0, noise: NoiseModel | None = None) -> float:
    codeword = np.asarray(codeword)
    channel = np.asarray(channel)
    if codeword.shape != channel.shape:
        raise ValueError(f"length mismatch: codeword {codeword.shape} vs channel {channel.shape}")
    out = np.vdot(codeword, channel) * symbol
    if noise is not None:
        out = out + np.vdot(codeword, noise.draw(channel.shape))
    return float(abs(out))


def measure_bursts(codewords: np.ndarray, channels: np.ndarray, noise: NoiseModel, symbol: complex = 1.0) -> np.ndarray:
    """RSS for every (channel, codeword) pair with a fresh noise vector per pair.

    Args:
        codewords: ``(N_r, M)`` codeword columns.
        channels: ``(S, N_r)`` channel vectors.

    Returns:
        ``(S, M)`` non-negative measurements.
    """
    channels = np.atleast_2d(channels)
    n_r, m = codewords.shape
    clean = (channels @ codewords.conj()) * symbol
    n = noise.draw((channels.shape[0], m, n_r))
    noisy = clean + np.einsum("smn,nm->sm", n, codewords.conj())
    return np.abs(noisy)


def measure_step(
    pn_codebook: PnCodebook,
    channel_state: LosChannelState,
    plan: SensingPlan,
    phase: Phase | str,
    noise: NoiseModel,
    symbol: complex = 1.0,
) -> MeasurementVector:
    """Measurements taken in one frame step.

    The initial step uses ``w_1..w_{M_I}``, loop steps ``w_1..w_{M_L}``, and
    prediction steps take no measurements. The channel is frozen for the burst.
    """
    if pn_codebook.num_codewords < plan.m_initial:
        raise ValueError(f"codebook has {pn_codebook.num_codewords} codewords, plan needs M_I={plan.m_initial}")
    m = plan.count(phase)
    if m == 0:
        return MeasurementVector(np.zeros(0), (), channel_state.time_step)
    h = channel_vector(channel_state, pn_codebook.geometry)
    values = measure_bursts(pn_codebook.columns[:, :m], h[None, :], noise, symbol)[0]
    return MeasurementVector(values, tuple(range(1, m + 1)), channel_state.time_step)


def normalize_unit(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    norm = np.linalg.norm(values)
    if norm == 0 or not math.isfinite(norm):
        raise ValueError("cannot normalise a zero or non-finite feature vector")
    return values / norm


def normalize_rows(values) -> np.ndarray:
    """Row-wise :func:`normalize_unit` over the last axis."""
    values = np.asarray(values, dtype=float)
    norm = np.linalg.norm(values, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalise a zero feature vector")
    return values / norm


MEASUREMENT_LOG_HEADER = ("frame_id", "time_step", "phase", "m_index", "value")


def write_measurement_log(path, frames) -> None:
    """Write ``(frame_id, [MeasurementVector, ...])`` pairs as a CSV log.

    ``m_index`` is 0-based; ``time_step`` is the step within the frame.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MEASUREMENT_LOG_HEADER)
        for frame_id, vectors in frames:
            for step, vec in enumerate(vectors):
                phase = Phase.INITIAL if step == 0 else (Phase.LOOP if len(vec) else Phase.PREDICTION)
                for m, v in enumerate(vec.values):
                    w.writerow([frame_id, step, phase.value, m, repr(float(v))])


def read_measurement_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["frame_id"] = int(r["frame_id"])
        r["time_step"] = int(r["time_step"])
        r["m_index"] = int(r["m_index"])
        r["value"] = float(r["value"])
    return rows
