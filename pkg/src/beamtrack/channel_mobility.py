"""Synthetic LOS street-cell channel, UE trajectories and tracking frames.

Geometry: the BS sits at the origin, the street runs along ``y`` and the UE
array broadside points across the street (``+x``). The serving cell is the
rectangle ``x in [15, 35], y in [-20, 20]`` metres, which puts the nearest UE
position 15 m from the BS and bounds the angle of arrival to about +-53 deg.
UEs move in a straight line towards ``-y`` at a constant integer number of
0.2 m grid steps per time step.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .array_signal import ArrayGeometry, steering_matrix, steering_vector

LN10_OVER_20 = math.log(10) / 20
_GRID_TOL = 1e-6


@dataclass(frozen=True)
class Rect:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains(self, x, y, tol: float = 1e-9):
        return (
            (x >= self.x_min - tol) & (x <= self.x_max + tol) & (y >= self.y_min - tol) & (y <= self.y_max + tol)
        )

    def corners(self):
        return [(self.x_min, self.y_min), (self.x_min, self.y_max), (self.x_max, self.y_min), (self.x_max, self.y_max)]


@dataclass(frozen=True)
class Scenario:
    bs_position: tuple = (0.0, 0.0)
    cell_rect: Rect = Rect(15.0, 35.0, -20.0, 20.0)
    grid_step: float = 0.2
    # 26 m across the street by 36 m along it, centred on the cell's +y edge.
    start_box: Rect = Rect(12.0, 38.0, 2.0, 38.0)
    speed_range: tuple = (1, 10)
    pathloss_exponent: float = 2.0
    max_snr_db: float = 30.0
    ref_distance: float = 15.0

    def __post_init__(self):
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        lo, hi = self.speed_range
        if not (1 <= lo <= hi):
            raise ValueError(f"invalid speed_range {self.speed_range}")
        if abs(self.nearest_cell_distance - self.ref_distance) > 1e-9:
            raise ValueError(
                f"ref_distance {self.ref_distance} must equal the BS-to-cell distance {self.nearest_cell_distance}"
            )
        if self.max_abs_aoa > math.radians(55.0):
            raise ValueError(f"cell spans |aoa| up to {math.degrees(self.max_abs_aoa):.2f} deg, limit is 55 deg")

    @property
    def nearest_cell_distance(self) -> float:
        bx, by = self.bs_position
        r = self.cell_rect
        dx = max(r.x_min - bx, 0.0, bx - r.x_max)
        dy = max(r.y_min - by, 0.0, by - r.y_max)
        return math.hypot(dx, dy)

    @property
    def max_abs_aoa(self) -> float:
        bx, by = self.bs_position
        return max(abs(math.atan2(y - by, x - bx)) for x, y in self.cell_rect.corners())

    def snr_db_at(self, x, y):
        dist = np.hypot(np.asarray(x) - self.bs_position[0], np.asarray(y) - self.bs_position[1])
        return self.max_snr_db - 10 * self.pathloss_exponent * np.log10(dist / self.ref_distance)

    def aoa_at(self, x, y):
        # broadside is +x, so the angle off broadside is atan2(dy, dx)
        return np.arctan2(np.asarray(y) - self.bs_position[1], np.asarray(x) - self.bs_position[0])


@dataclass(frozen=True)
class LosChannelState:
    aoa: float
    log_amplitude: float
    snr_db: float
    position: tuple
    time_step: int = 0


def log_amplitude_for_snr(snr_db, sigma: float = 1.0):
    """``-alpha`` such that ``exp(-2 alpha) / sigma^2 = 10^(snr_db / 10)``."""
    if sigma <= 0:
        raise ValueError(f"SNR needs a positive noise level, got sigma={sigma}")
    return np.asarray(snr_db) * LN10_OVER_20 + np.log(sigma)


def los_channel_at(position, scenario: Scenario, time_step: int = 0) -> LosChannelState:
    x, y = (float(v) for v in position)
    if not bool(scenario.cell_rect.contains(x, y)):
        raise ValueError(f"position ({x}, {y}) is outside the cell {scenario.cell_rect}")
    snr = float(scenario.snr_db_at(x, y))
    return LosChannelState(
        aoa=float(scenario.aoa_at(x, y)),
        log_amplitude=float(log_amplitude_for_snr(snr)),
        snr_db=snr,
        position=(x, y),
        time_step=time_step,
    )


def channel_vector(state: LosChannelState, geometry: ArrayGeometry) -> np.ndarray:
    """``h = exp(-alpha) a_r(aoa)``."""
    return math.exp(state.log_amplitude) * steering_vector(geometry, state.aoa)


def channel_matrix(aoa, log_amplitude, geometry: ArrayGeometry) -> np.ndarray:
    """Vectorised :func:`channel_vector`; returns shape ``(len(aoa), N_r)``."""
    return np.exp(np.asarray(log_amplitude, dtype=float))[:, None] * steering_matrix(geometry, aoa)


# ---------------------------------------------------------------------------
# Trajectories


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Straight constant-speed UE track.

    ``grid_index`` holds integer grid coordinates; ``positions`` the same
    points in metres.
    """

    grid_index: np.ndarray
    speed: int
    grid_step: float
    trajectory_id: int = -1
    direction: tuple = (0, -1)

    @property
    def positions(self) -> np.ndarray:
        return np.round(self.grid_index * self.grid_step, 9)

    def __len__(self):
        return len(self.grid_index)


def sample_trajectory(scenario: Scenario, rng: np.random.Generator, trajectory_id: int = -1) -> Trajectory:
    """Random start in ``start_box`` (grid-snapped), random integer speed, heading -y.

    The track ends at the last position before leaving the cell on its -y side.
    """
    box = scenario.start_box
    g = scenario.grid_step
    x0 = rng.uniform(box.x_min, box.x_max)
    y0 = rng.uniform(box.y_min, box.y_max)
    speed = int(rng.integers(scenario.speed_range[0], scenario.speed_range[1] + 1))
    ix, iy = int(round(x0 / g)), int(round(y0 / g))
    y_stop = int(math.floor(scenario.cell_rect.y_min / g + _GRID_TOL))
    n_steps = (iy - y_stop) // speed + 1 if iy >= y_stop else 1
    iys = iy - speed * np.arange(n_steps)
    grid = np.stack([np.full(n_steps, ix), iys], axis=1).astype(np.int64)
    return Trajectory(grid, speed, g, trajectory_id)


def in_cell_steps(trajectory: Trajectory, scenario: Scenario) -> np.ndarray:
    """Indices of trajectory steps inside the cell (contiguous for straight tracks)."""
    pos = trajectory.positions
    return np.flatnonzero(scenario.cell_rect.contains(pos[:, 0], pos[:, 1]))


@dataclass(frozen=True, eq=False)
class FrameWindow:
    history_len: int
    prediction_len: int
    channel_states: tuple
    trajectory_id: int = -1
    start_step: int = 0
    speed: int = 0

    @property
    def length(self) -> int:
        return self.history_len + self.prediction_len


def trajectory_states(trajectory: Trajectory, scenario: Scenario) -> list[LosChannelState]:
    """Channel state at every in-cell step, ``time_step`` = index into the track."""
    pos = trajectory.positions
    return [los_channel_at(pos[i], scenario, int(i)) for i in in_cell_steps(trajectory, scenario)]


def frame_starts(n_in_cell: int, T: int, P: int, stride: int = 1) -> range:
    return range(0, n_in_cell - (T + P) + 1, stride)


def extract_frames(trajectory: Trajectory, T: int, P: int, scenario: Scenario, stride: int = 1) -> list[FrameWindow]:
    """All windows of ``T + P`` consecutive in-cell steps.

    ``stride=1`` gives every shifted window (training); ``stride=T+P`` gives
    back-to-back non-overlapping frames (operation).
    """
    if T < 1 or P < 1:
        raise ValueError(f"need T >= 1 and P >= 1, got T={T}, P={P}")
    states = trajectory_states(trajectory, scenario)
    n = T + P
    return [
        FrameWindow(T, P, tuple(states[s : s + n]), trajectory.trajectory_id, states[s].time_step, trajectory.speed)
        for s in frame_starts(len(states), T, P, stride)
    ]


# ---------------------------------------------------------------------------
# Dataset

PARTITIONS = ("train_stage1", "train_stage2", "validation", "test")


@dataclass(eq=False)
class Dataset:
    scenario: Scenario
    trajectories: list
    partitions: dict
    history_len: int
    prediction_len: int
    seed: int
    _states: dict = field(default_factory=dict, repr=False)

    def states(self, trajectory_id: int) -> list[LosChannelState]:
        if trajectory_id not in self._states:
            self._states[trajectory_id] = trajectory_states(self.trajectories[trajectory_id], self.scenario)
        return self._states[trajectory_id]

    def frames(self, partition: str, stride: int = 1) -> list[FrameWindow]:
        T, P = self.history_len, self.prediction_len
        out = []
        for tid in self.partitions[partition]:
            states = self.states(tid)
            speed = self.trajectories[tid].speed
            for s in frame_starts(len(states), T, P, stride):
                out.append(FrameWindow(T, P, tuple(states[s : s + T + P]), tid, states[s].time_step, speed))
        return out

    @cached_property
    def num_in_cell(self) -> dict:
        return {tid: len(self.states(tid)) for tid in range(len(self.trajectories))}


def split_counts(num_trajectories: int) -> dict:
    """Trajectory counts per partition: 10 % / 75 % / 15 %, with 10 % of stage 2 held out."""
    n_stage1 = round(0.10 * num_trajectories)
    n_test = round(0.15 * num_trajectories)
    n_stage2_all = num_trajectories - n_stage1 - n_test
    n_val = round(0.10 * n_stage2_all)
    return {
        "train_stage1": n_stage1,
        "train_stage2": n_stage2_all - n_val,
        "validation": n_val,
        "test": n_test,
    }


def generate_dataset(
    scenario: Scenario, num_trajectories: int = 1000, T: int = 7, P: int = 2, seed: int = 0
) -> Dataset:
    """Sample trajectories and split them into the four partitions at trajectory level.

    Each trajectory draws from its own sub-seed ``(seed, 0, i)``; the split uses
    ``(seed, 1)``. The result is a pure function of the arguments.
    """
    if num_trajectories < 20:
        raise ValueError("num_trajectories must be >= 20")
    counts = split_counts(num_trajectories)
    for name, c in counts.items():
        if c < 1:
            raise ValueError(f"partition {name} would be empty for {num_trajectories} trajectories")
    trajectories = [
        sample_trajectory(scenario, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, i))), i)
        for i in range(num_trajectories)
    ]
    order = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,))).permutation(num_trajectories)
    partitions, start = {}, 0
    for name in PARTITIONS:
        partitions[name] = sorted(int(i) for i in order[start : start + counts[name]])
        start += counts[name]
    return Dataset(scenario, trajectories, partitions, T, P, seed)


def write_frames_jsonl(path, frames, partition: str | None = None) -> None:
    with open(path, "a" if partition else "w") as fh:
        for fr in frames:
            rec = {
                "trajectory_id": fr.trajectory_id,
                "start_step": fr.start_step,
                "speed": fr.speed,
                "states": [
                    {"x": s.position[0], "y": s.position[1], "aoa": s.aoa, "snr_db": s.snr_db} for s in fr.channel_states
                ],
            }
            if partition:
                rec["partition"] = partition
            fh.write(json.dumps(rec) + "\n")


def write_dataset_jsonl(path, dataset: Dataset) -> None:
    Path(path).write_text("")
    for name in PARTITIONS:
        write_frames_jsonl(path, dataset.frames(name), partition=name)


def read_frames_jsonl(path, T: int, P: int) -> list[tuple[str | None, FrameWindow]]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if len(rec["states"]) != T + P:
                raise ValueError(f"{path}:{lineno}: frame has {len(rec['states'])} states, expected {T + P}")
            states = tuple(
                LosChannelState(
                    aoa=s["aoa"],
                    log_amplitude=float(log_amplitude_for_snr(s["snr_db"])),
                    snr_db=s["snr_db"],
                    position=(s["x"], s["y"]),
                    time_step=rec["start_step"] + i,
                )
                for i, s in enumerate(rec["states"])
            )
            out.append((rec.get("partition"), FrameWindow(T, P, states, rec["trajectory_id"], rec["start_step"], rec["speed"])))
    return out


# ---------------------------------------------------------------------------
# External channel tables

CHANNEL_TABLE_HEADER = ("x_m", "y_m", "aoa_rad", "gain_db")


@dataclass(frozen=True)
class ChannelRecord:
    position: tuple
    aoa: float
    gain_db: float

    def to_state(self, time_step: int = 0) -> LosChannelState:
        """Channel state under the unit-noise convention (``gain_db`` is the per-antenna SNR)."""
        return LosChannelState(
            aoa=self.aoa,
            log_amplitude=float(log_amplitude_for_snr(self.gain_db)),
            snr_db=self.gain_db,
            position=self.position,
            time_step=time_step,
        )


def import_channel_table(path, grid_step: float = 0.2) -> list[ChannelRecord]:
    """Load a ``x_m,y_m,aoa_rad,gain_db`` CSV of externally generated channels.

    Positions must sit on the ``grid_step`` lattice; they are snapped to it
    exactly. Errors name the offending 1-based line number.
    """
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return records
        if tuple(h.strip() for h in header) != CHANNEL_TABLE_HEADER:
            raise ValueError(f"{path}: line 1: expected header {','.join(CHANNEL_TABLE_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            try:
                x, y, aoa, gain = (float(c) for c in row)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in (x, y, aoa, gain)):
                raise ValueError(f"{path}: line {lineno}: non-finite value")
            if abs(aoa) > math.pi / 2:
                raise ValueError(f"{path}: line {lineno}: aoa {aoa} outside [-pi/2, pi/2]")
            gx, gy = x / grid_step, y / grid_step
            if abs(gx - round(gx)) > _GRID_TOL or abs(gy - round(gy)) > _GRID_TOL:
                raise ValueError(f"{path}: line {lineno}: position ({x}, {y}) is off the {grid_step} m grid")
            pos = (round(round(gx) * grid_step, 9), round(round(gy) * grid_step, 9))
            records.append(ChannelRecord(pos, aoa, gain))
    return records
