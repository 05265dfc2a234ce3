"""Three-stage training/operation pipeline and parameter sweeps.

Stage 1 trains both mmRAPID instances on per-step RSS bursts labelled by a
noisy exhaustive sweep. Stage 2 trains the tracker on all shifted frames of
the stage-2 trajectories (exhaustive labels, teacher forcing). Stage 3 runs the
trained models over back-to-back frames of the test trajectories and scores
them against the noise-free oracle beam.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .array_signal import ArrayGeometry, PencilCodebook, PnCodebook, build_pencil_codebook, build_pn_codebook
from .beam_estimators import MmRapidConfig, MmRapidModel, exhaustive_sweep, oracle_beams, train_mmrapid
from .channel_mobility import Dataset, Scenario, channel_matrix, frame_starts, generate_dataset, in_cell_steps
from .channel_mobility import log_amplitude_for_snr
from .measurement import NoiseModel, SensingPlan, measure_bursts
from .metrics import MetricsReport, build_report, gain_loss_db_batch
from .nn import OptimizerConfig
from .seq2seq_tracker import TrackerConfig, TrackerModel, predict_frames, train_tracker

log = logging.getLogger(__name__)


def _parse_int_list(text) -> tuple:
    """``"2..9"`` -> (2, ..., 9); ``"3,5,7"`` -> (3, 5, 7)."""
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    # array and codebooks
    num_elements: int = 36
    spacing_over_wavelength: float = 0.5
    num_beams: int = 128
    pn_codewords: int = 16
    # scenario
    pathloss_exponent: float = 2.0
    max_snr_db: float = 30.0
    noise_sigma: float = 1.0
    num_trajectories: int = 1000
    # sensing plan
    m_initial: int = 5
    m_loop: int = 5
    history_len: int = 7
    prediction_len: int = 2
    # mmRAPID
    mm_hidden: str = "128,64"
    mm_max_epochs: int = 300
    mm_patience: int = 10
    mm_learning_rate: float = 1e-3
    mm_batch_size: int = 64
    # tracker
    encoder_hidden: int = 64
    decoder_hidden: int = 64
    dense_hidden: int = 64
    tracker_max_epochs: int = 200
    tracker_patience: int = 10
    tracker_learning_rate: float = 1e-3
    tracker_batch_size: int = 128
    dropout: float = 0.1
    # seeds
    data_seed: int = 0
    pn_seed: int = 1
    noise_seed: int = 2
    init_seed: int = 3
    # evaluation
    mmrapid_baseline_m: int = 5
    gain_loss_threshold_db: float = 3.0
    # sweep grids
    sweep_m_initial: str = "2..9"
    sweep_m_loop: str = "2..9"
    sweep_history: str = "2..8"
    sweep_prediction: str = "1..7"

    def __post_init__(self):
        self.plan  # validates M_I >= M_L etc.
        if self.pn_codewords < self.m_initial:
            raise ValueError(f"pn_codewords ({self.pn_codewords}) must be >= m_initial ({self.m_initial})")

    @property
    def plan(self) -> SensingPlan:
        return SensingPlan(self.m_initial, self.m_loop, self.history_len, self.prediction_len)

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.num_elements, self.spacing_over_wavelength)

    @property
    def scenario(self) -> Scenario:
        return Scenario(pathloss_exponent=self.pathloss_exponent, max_snr_db=self.max_snr_db)

    def mmrapid_config(self, seed_offset: int = 0) -> MmRapidConfig:
        return MmRapidConfig(
            hidden=_parse_int_list(self.mm_hidden), dropout=self.dropout, batch_size=self.mm_batch_size,
            max_epochs=self.mm_max_epochs, patience=self.mm_patience,
            optimizer=OptimizerConfig("rmsprop", self.mm_learning_rate), seed=self.init_seed + seed_offset,
        )

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            self.history_len, self.prediction_len, self.m_loop, self.num_beams, self.encoder_hidden,
            self.decoder_hidden, self.dense_hidden, self.dropout, batch_size=self.tracker_batch_size,
            max_epochs=self.tracker_max_epochs, patience=self.tracker_patience,
            optimizer=OptimizerConfig("adam", self.tracker_learning_rate), seed=self.init_seed,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # flat key = value text files ------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            conv = {"int": int, "float": float, "str": str}[types[key]]
            try:
                values[key] = conv(value)
            except ValueError:
                raise ValueError(f"config line {lineno}: bad value {value!r} for {key}") from None
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())


# ---------------------------------------------------------------------------
# Per-trajectory simulation


@dataclass(frozen=True, eq=False)
class TrajectoryData:
    """Arrays over the in-cell steps of one trajectory."""

    aoa: np.ndarray
    log_amplitude: np.ndarray
    rss: np.ndarray  # (n, pn_codewords) one burst per step
    oracle: np.ndarray  # 1-based, noise-free
    exhaustive: np.ndarray | None  # 1-based, noisy sweep (None in operation)

    def __len__(self):
        return len(self.aoa)


def simulate_trajectory(dataset: Dataset, trajectory_id: int, geometry: ArrayGeometry, pencil: PencilCodebook,
                        pn: PnCodebook, noise_seed: int, sigma: float = 1.0, with_exhaustive: bool = True
                        ) -> TrajectoryData:
    """RSS bursts, oracle labels and (optionally) exhaustive-sweep labels for one track.

    Noise streams are keyed by ``(noise_seed, trajectory_id)`` so results do not
    depend on which other trajectories are simulated, or in what order.
    """
    traj = dataset.trajectories[trajectory_id]
    pos = traj.positions[in_cell_steps(traj, dataset.scenario)]
    sc = dataset.scenario
    aoa = sc.aoa_at(pos[:, 0], pos[:, 1])
    # a noise-free run keeps the unit-noise amplitude scale
    la = log_amplitude_for_snr(sc.snr_db_at(pos[:, 0], pos[:, 1]), sigma if sigma > 0 else 1.0)
    if len(pos) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return TrajectoryData(aoa, la, np.zeros((0, pn.num_codewords)), empty, empty if with_exhaustive else None)
    h = channel_matrix(aoa, la, geometry)
    meas_noise = NoiseModel(sigma, np.random.default_rng(np.random.SeedSequence(noise_seed, spawn_key=(trajectory_id, 0))))
    rss = measure_bursts(pn.columns, h, meas_noise)
    exh = None
    if with_exhaustive:
        sweep_noise = NoiseModel(sigma, np.random.default_rng(np.random.SeedSequence(noise_seed, spawn_key=(trajectory_id, 1))))
        exh = exhaustive_sweep(h, pencil, sweep_noise)
    return TrajectoryData(aoa, la, rss, oracle_beams(aoa, pencil), exh)


@dataclass(eq=False)
class SimulatedData:
    config: ExperimentConfig
    dataset: Dataset
    pencil: PencilCodebook
    pn: PnCodebook
    trajectories: dict

    def steps(self, partition: str, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (rss[:, :m], exhaustive labels) over all in-cell steps of a partition."""
        tids = [t for t in self.dataset.partitions[partition] if len(self.trajectories[t])]
        x = np.concatenate([self.trajectories[t].rss[:, :m] for t in tids])
        y = np.concatenate([self.trajectories[t].exhaustive for t in tids])
        return x, y

    def frame_index(self, partition: str, T: int, P: int, stride: int = 1) -> list[tuple[int, int]]:
        return [(t, s) for t in self.dataset.partitions[partition]
                for s in frame_starts(len(self.trajectories[t]), T, P, stride)]

    def frames(self, partition: str, T: int, P: int, m: int, stride: int = 1, labels: str = "exhaustive"):
        """Stack frames into ``(rss (N, T+P, m), labels (N, T+P), aoa (N, T+P))``."""
        idx = self.frame_index(partition, T, P, stride)
        n = T + P
        if not idx:
            return np.zeros((0, n, m)), np.zeros((0, n), dtype=np.int64), np.zeros((0, n))
        rss = np.stack([self.trajectories[t].rss[s : s + n, :m] for t, s in idx])
        lab = np.stack([getattr(self.trajectories[t], labels)[s : s + n] for t, s in idx])
        aoa = np.stack([self.trajectories[t].aoa[s : s + n] for t, s in idx])
        return rss, lab, aoa


def simulate(config: ExperimentConfig, dataset: Dataset | None = None) -> SimulatedData:
    geometry = config.geometry
    dataset = dataset or generate_dataset(config.scenario, config.num_trajectories, config.history_len,
                                          config.prediction_len, config.data_seed)
    pencil = build_pencil_codebook(geometry, config.num_beams)
    pn = build_pn_codebook(geometry, config.pn_codewords, config.pn_seed)
    test = set(dataset.partitions["test"])
    trajectories = {
        tid: simulate_trajectory(dataset, tid, geometry, pencil, pn, config.noise_seed, config.noise_sigma,
                                 with_exhaustive=tid not in test)
        for tid in range(len(dataset.trajectories))
    }
    return SimulatedData(config, dataset, pencil, pn, trajectories)


# ---------------------------------------------------------------------------
# Stages


@dataclass(eq=False)
class TrainedModels:
    mmrapid1: MmRapidModel
    mmrapid2: MmRapidModel
    tracker: TrackerModel | None = None

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.mmrapid1.save(d / "mmrapid1.json")
        self.mmrapid2.save(d / "mmrapid2.json")
        if self.tracker is not None:
            self.tracker.save(d / "tracker.json")

    @classmethod
    def load(cls, directory) -> "TrainedModels":
        d = Path(directory)
        tracker = TrackerModel.load(d / "tracker.json") if (d / "tracker.json").exists() else None
        return cls(MmRapidModel.load(d / "mmrapid1.json"), MmRapidModel.load(d / "mmrapid2.json"), tracker)


def train_stage1(config: ExperimentConfig, data: SimulatedData, cache: dict | None = None):
    """Both mmRAPID instances on stage-1 steps (M_I and M_L prefixes of the same bursts)."""
    cache = cache if cache is not None else {}
    out = []
    for instance, m in ((1, config.m_initial), (2, config.m_loop)):
        key = (instance, m)
        if key not in cache:
            x, y = data.steps("train_stage1", m)
            t0 = time.perf_counter()
            cache[key] = train_mmrapid(x, y, instance, config.mmrapid_config(seed_offset=instance), config.num_beams)
            log.info("stage 1: mmRAPID #%d (M=%d) trained on %d steps in %.1fs", instance, m, len(x),
                     time.perf_counter() - t0)
        out.append(cache[key])
    return out


def train_stage2(config: ExperimentConfig, data: SimulatedData) -> TrackerModel:
    T, P, m = config.history_len, config.prediction_len, config.m_loop
    rss, lab, _ = data.frames("train_stage2", T, P, m)
    rss_v, lab_v, _ = data.frames("validation", T, P, m)
    model = TrackerModel(config.tracker_config())
    t0 = time.perf_counter()
    hist = train_tracker(model, rss[:, :T], lab, rss_v[:, :T] if len(rss_v) else None,
                         lab_v if len(rss_v) else None)
    log.info("stage 2: tracker trained on %d frames, %d epochs (best %d) in %.1fs", len(rss), len(hist.val_loss),
             hist.best_epoch + 1, time.perf_counter() - t0)
    return model


@dataclass(eq=False)
class Evaluation:
    reports: dict  # variant -> MetricsReport
    predictions: dict  # variant -> (N, T+P) beam indices
    oracle: np.ndarray
    gain_loss: dict  # variant -> (N, T+P) dB
    measurements_per_frame: np.ndarray


def evaluate_stage3(config: ExperimentConfig, data: SimulatedData, models: TrainedModels) -> Evaluation:
    plan = config.plan
    T, P = plan.history_len, plan.prediction_len
    rss, oracle, aoa = data.frames("test", T, P, config.pn_codewords, stride=T + P, labels="oracle")
    if len(rss) == 0:
        raise ValueError("test partition has no complete frames")
    initial = rss[:, 0, : plan.m_initial]
    loop = rss[:, 1:T, : plan.m_loop]
    pred = predict_frames(models.tracker, models.mmrapid1, models.mmrapid2, initial, loop, plan)
    per_frame = np.full(len(rss), initial.shape[1] + loop.shape[1] * loop.shape[2])
    baselines = {"exhaustive": config.num_beams, "mmrapid": config.mmrapid_baseline_m}
    reports, preds, gls = {}, {}, {}
    for variant, p in (("full", pred.full), ("lstm", pred.lstm)):
        gl = gain_loss_db_batch(p, aoa, data.pencil)
        reports[variant] = build_report(p, oracle, gl, plan, baselines)
        preds[variant], gls[variant] = p, gl
    return Evaluation(reports, preds, oracle, gls, per_frame)


def run_three_stage(config: ExperimentConfig, data: SimulatedData | None = None, mm_cache: dict | None = None
                    ) -> tuple[TrainedModels, Evaluation]:
    data = data or simulate(config)
    mm1, mm2 = train_stage1(config, data, mm_cache)
    tracker = train_stage2(config, data)
    models = TrainedModels(mm1, mm2, tracker)
    return models, evaluate_stage3(config, data, models)


# ---------------------------------------------------------------------------
# CSV output and sweeps

METRICS_HEADER = ("variant", "M_I", "M_L", "T", "P", "accuracy", "gl_p90_db", "avg_meas", "overhead_vs_exhaustive",
                  "overhead_vs_mmrapid")


def metrics_rows(config: ExperimentConfig, reports: dict) -> list[list]:
    rows = []
    for variant in sorted(reports):
        r: MetricsReport = reports[variant]
        rows.append([variant, config.m_initial, config.m_loop, config.history_len, config.prediction_len,
                     repr(r.accuracy), repr(r.gl_p90_db), repr(r.avg_measurements_per_step),
                     repr(r.overhead_reduction_vs["exhaustive"]), repr(r.overhead_reduction_vs["mmrapid"])])
    return rows


def format_metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def write_metrics_csv(path, rows) -> None:
    Path(path).write_text(format_metrics_csv(rows))


def sweep_cells(config: ExperimentConfig, grid: str) -> list[dict]:
    """Grid cells as dicts of config overrides, ordered by cell key."""
    if grid == "measurements":
        return [{"m_initial": mi, "m_loop": ml}
                for mi in _parse_int_list(config.sweep_m_initial)
                for ml in _parse_int_list(config.sweep_m_loop)]
    if grid == "windows":
        return [{"history_len": t, "prediction_len": p}
                for t in _parse_int_list(config.sweep_history)
                for p in _parse_int_list(config.sweep_prediction)]
    raise ValueError(f"unknown grid {grid!r}; expected 'measurements' or 'windows'")


def sweep(config: ExperimentConfig, grid: str) -> list[list]:
    """Train and evaluate every valid grid cell; returns metric CSV rows.

    Cells that violate the plan constraints (e.g. ``M_I < M_L``) are skipped
    with a logged reason. All cells share one simulated data set.
    """
    cells = sweep_cells(config, grid)
    if not cells:
        raise ValueError("sweep grid is empty")
    needed = max([c.get("m_initial", config.m_initial) for c in cells] + [config.m_initial])
    base = config.replace(pn_codewords=max(config.pn_codewords, needed))
    data = simulate(base)
    mm_cache: dict = {}
    rows = []
    for cell in cells:
        try:
            cfg = base.replace(**cell)
        except ValueError as exc:
            log.warning("skipping cell %s: %s", cell, exc)
            continue
        _, ev = run_three_stage(cfg, data, mm_cache)
        rows.extend(metrics_rows(cfg, ev.reports))
        log.info("cell %s: full p90 %.2f dB, lstm p90 %.2f dB", cell, ev.reports["full"].gl_p90_db,
                 ev.reports["lstm"].gl_p90_db)
    return rows
