"""Evaluation metrics: accuracy, gain loss, and measurement overhead."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .array_signal import PencilCodebook, steering_matrix
from .channel_mobility import LosChannelState
from .measurement import SensingPlan


def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(p == y))


def gain_loss_db_batch(predicted, aoas, codebook: PencilCodebook) -> np.ndarray:
    """Noise-free gain of the oracle beam over that of ``predicted`` (1-based), in dB.

    Beams with exactly zero gain yield ``+inf``.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    aoas = np.asarray(aoas, dtype=float)
    if predicted.shape != aoas.shape:
        raise ValueError("predicted and aoas must have the same shape")
    if predicted.size and (predicted.min() < 1 or predicted.max() > codebook.num_beams):
        raise ValueError("predicted beam index out of range")
    flat_p, flat_a = predicted.ravel(), aoas.ravel()
    gains = codebook.gains(steering_matrix(codebook.geometry, flat_a))
    best = gains.max(axis=-1)
    chosen = gains[np.arange(len(flat_p)), flat_p - 1]
    with np.errstate(divide="ignore"):
        out = np.where(chosen > 0, 10 * np.log10(best / np.where(chosen > 0, chosen, 1.0)), np.inf)
    # guard against -0.0 / rounding below zero when chosen == best
    return np.maximum(out, 0.0).reshape(predicted.shape)


def gain_loss_db(predicted_index: int, channel_state: LosChannelState, codebook: PencilCodebook) -> float:
    return float(gain_loss_db_batch(np.array([predicted_index]), np.array([channel_state.aoa]), codebook)[0])


def percentile_gain_loss(values, pct: float = 90) -> float:
    """Rank-based percentile over finite values (``inf`` sentinels are dropped).

    Returns the sorted value at 0-based index ``ceil(pct/100 * (n - 1))``, i.e.
    an observed value never below the interpolated percentile.
    """
    v = np.asarray(values, dtype=float).ravel()
    v = np.sort(v[np.isfinite(v)])
    if v.size == 0:
        raise ValueError("percentile of an empty set is undefined")
    if not 0 < pct <= 100:
        raise ValueError("pct must be in (0, 100]")
    return float(v[math.ceil(pct / 100 * (v.size - 1) - 1e-12)])


def avg_measurements(plan: SensingPlan) -> float:
    return plan.measurements_per_frame / plan.frame_len


def overhead_reduction(plan: SensingPlan, baseline_m: int) -> float:
    """``1 - (M_I + M_L (T - 1)) / (M (T + P))``."""
    if baseline_m < 1:
        raise ValueError("baseline_m must be >= 1")
    return 1 - plan.measurements_per_frame / (baseline_m * plan.frame_len)


@dataclass
class MetricsReport:
    accuracy: float
    gain_loss_db_percentiles: dict
    avg_measurements_per_step: float
    overhead_reduction_vs: dict
    num_frames: int
    num_infinite: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.accuracy <= 1:
            raise ValueError("accuracy must lie in [0, 1]")
        if any(v < 0 for v in self.gain_loss_db_percentiles.values()):
            raise ValueError("gain-loss percentiles must be >= 0 dB")

    @property
    def gl_p90_db(self) -> float:
        return self.gain_loss_db_percentiles[90]


def build_report(predicted, oracle, gain_losses, plan: SensingPlan, baselines: dict,
                 percentiles=(50, 90, 95)) -> MetricsReport:
    gl = np.asarray(gain_losses, dtype=float)
    return MetricsReport(
        accuracy=accuracy(np.ravel(predicted), np.ravel(oracle)),
        gain_loss_db_percentiles={p: percentile_gain_loss(gl, p) for p in percentiles},
        avg_measurements_per_step=avg_measurements(plan),
        overhead_reduction_vs={name: overhead_reduction(plan, m) for name, m in baselines.items()},
        num_frames=int(np.shape(predicted)[0]),
        num_infinite=int(np.sum(~np.isfinite(gl))),
    )
