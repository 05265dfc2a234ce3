"""Uniform linear array math: steering vectors and the two UE codebooks.

Two dictionaries live here:

* the pencil-beam data codebook ``V`` (``K`` narrow beams, ``K > N_r``), and
* the pseudo-random sensing codebook ``W`` built from 2-bit phase shifters.

Beam indices are 1-based everywhere in the Python API. File formats written by
this package store 0-based indices where an index appears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PHASE_STEP = np.pi / 2


@dataclass(frozen=True)
class ArrayGeometry:
    num_elements: int = 36
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 1:
            raise ValueError(f"num_elements must be a positive integer, got {self.num_elements}")
        if not (self.spacing_over_wavelength > 0 and math.isfinite(self.spacing_over_wavelength)):
            raise ValueError("spacing_over_wavelength must be positive and finite")

    @property
    def element_index(self) -> np.ndarray:
        """0-based element positions ``n - 1``."""
        return np.arange(self.num_elements)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def steering_vector(geometry: ArrayGeometry, aoa: float) -> np.ndarray:
    """Spatial response ``a_r(aoa)`` of the UE array.

    Entry ``n`` (1-based) is ``exp(j 2 pi (n-1) sin(aoa) d / lambda)``.
    """
    aoa = float(aoa)
    if not math.isfinite(aoa):
        raise ValueError(f"aoa must be finite, got {aoa}")
    if abs(aoa) > np.pi / 2 + 1e-12:
        raise ValueError(f"aoa must lie in [-pi/2, pi/2], got {aoa}")
    phase = 2 * np.pi * geometry.element_index * np.sin(aoa) * geometry.spacing_over_wavelength
    return np.exp(1j * phase)


def steering_matrix(geometry: ArrayGeometry, aoas) -> np.ndarray:
    """Stack of steering vectors, shape ``(len(aoas), N_r)``."""
    aoas = np.asarray(aoas, dtype=float)
    if not np.all(np.isfinite(aoas)):
        raise ValueError("aoas must be finite")
    phase = 2 * np.pi * geometry.spacing_over_wavelength * np.outer(np.sin(aoas), geometry.element_index)
    return np.exp(1j * phase)


@dataclass(frozen=True, eq=False)
class PencilCodebook:
    """Data codebook ``V``; ``columns`` has shape ``(N_r, K)``."""

    geometry: ArrayGeometry
    columns: np.ndarray
    beam_angles: np.ndarray

    @property
    def num_beams(self) -> int:
        return self.columns.shape[1]

    def codeword(self, k: int) -> np.ndarray:
        """Beam ``v_k`` for a 1-based index ``k``."""
        if not 1 <= k <= self.num_beams:
            raise IndexError(f"beam index {k} outside [1, {self.num_beams}]")
        return self.columns[:, k - 1]

    def gains(self, channel: np.ndarray, symbol_power: float = 1.0) -> np.ndarray:
        """Noise-free ``|v_k^H h|^2 * symbol_power`` for all beams (last axis = beam).

        ``channel`` may be a single vector ``(N_r,)`` or a stack ``(..., N_r)``.
        """
        proj = np.asarray(channel) @ self.columns.conj()
        return (proj.real**2 + proj.imag**2) * symbol_power


def pencil_beam_angles(num_beams: int) -> np.ndarray:
    k = np.arange(1, num_beams + 1)
    return np.pi * (k - 1) / num_beams - np.pi / 2


def build_pencil_codebook(geometry: ArrayGeometry, num_beams: int = 128) -> PencilCodebook:
    """Pencil beams ``[v_k]_n = exp(-j 2 pi (n-1) sin(pi (k-1)/K - pi/2) d / lambda)``.

    Note the negative sign: ``v_k`` is matched to ``a_r(-beam_angles[k])``.
    """
    if num_beams <= geometry.num_elements:
        raise ValueError(f"need K > N_r for a high-resolution codebook, got K={num_beams}, N_r={geometry.num_elements}")
    angles = pencil_beam_angles(num_beams)
    phase = -2 * np.pi * geometry.spacing_over_wavelength * np.outer(geometry.element_index, np.sin(angles))
    return PencilCodebook(geometry, _readonly(np.exp(1j * phase)), _readonly(angles))


@dataclass(frozen=True, eq=False)
class PnCodebook:
    """Sensing codebook ``W``; ``columns`` has shape ``(N_r, M)``.

    ``phase_indices[m, n]`` is the 2-bit phase state of element ``n`` in codeword ``m``.
    """

    geometry: ArrayGeometry
    phase_indices: np.ndarray
    seed: int
    columns: np.ndarray = field(init=False)

    def __post_init__(self):
        idx = np.asarray(self.phase_indices, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[1] != self.geometry.num_elements:
            raise ValueError("phase_indices must have shape (M, N_r)")
        if idx.size and (idx.min() < 0 or idx.max() > 3):
            raise ValueError("phase indices must lie in {0, 1, 2, 3}")
        object.__setattr__(self, "phase_indices", _readonly(idx))
        object.__setattr__(self, "columns", _readonly(np.exp(1j * PHASE_STEP * idx.T)))

    @property
    def num_codewords(self) -> int:
        return self.phase_indices.shape[0]

    def codeword(self, m: int) -> np.ndarray:
        """Codeword ``w_m`` for a 1-based index ``m``."""
        if not 1 <= m <= self.num_codewords:
            raise IndexError(f"codeword index {m} outside [1, {self.num_codewords}]")
        return self.columns[:, m - 1]


def build_pn_codebook(geometry: ArrayGeometry, num_codewords: int, seed: int = 0) -> PnCodebook:
    """Draw an ``M``-codeword PN codebook with phases from {0, pi/2, pi, 3pi/2}.

    Uses the counter-based Philox generator so the draw is reproducible across
    platforms for a given seed.
    """
    if num_codewords < 1:
        raise ValueError("num_codewords must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.integers(0, 4, size=(num_codewords, geometry.num_elements))
    return PnCodebook(geometry, idx, seed)


def beam_gain(codeword, channel, symbol_power: float = 1.0) -> float:
    """Received power ``|w^H h|^2 * symbol_power``."""
    codeword = np.asarray(codeword)
    channel = np.asarray(channel)
    if codeword.shape != channel.shape:
        raise ValueError(f"length mismatch: codeword {codeword.shape} vs channel {channel.shape}")
    return float(abs(np.vdot(codeword, channel)) ** 2 * symbol_power)


# ---------------------------------------------------------------------------
# Text matrix export


def _format_complex(z: complex) -> str:
    return f"{float(z.real)!r}:{float(z.imag)!r}"


def write_codebook_text(path, columns: np.ndarray) -> None:
    """Write an ``(N_r, M)`` matrix as ``N_r M`` header plus one row per element."""
    columns = np.asarray(columns)
    lines = [f"{columns.shape[0]} {columns.shape[1]}"]
    for row in columns:
        lines.append(",".join(_format_complex(z) for z in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_codebook_text(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty codebook file")
    n_rows, n_cols = (int(v) for v in lines[0].split())
    if len(lines) - 1 != n_rows:
        raise ValueError(f"{path}: header declares {n_rows} rows, found {len(lines) - 1}")
    out = np.empty((n_rows, n_cols), dtype=complex)
    for i, line in enumerate(lines[1:]):
        fields = line.split(",")
        if len(fields) != n_cols:
            raise ValueError(f"{path}: line {i + 2} has {len(fields)} entries, expected {n_cols}")
        for j, pair in enumerate(fields):
            re, im = pair.split(":")
            out[i, j] = complex(float(re), float(im))
    return out


def write_phase_grid(path, codebook: PnCodebook) -> None:
    """PN phase indices as an ``N_r M`` header and one integer row per element."""
    grid = codebook.phase_indices.T
    lines = [f"{grid.shape[0]} {grid.shape[1]}"]
    lines += [",".join(str(int(v)) for v in row) for row in grid]
    Path(path).write_text("\n".join(lines) + "\n")


def read_phase_grid(path, geometry: ArrayGeometry, seed: int = -1) -> PnCodebook:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    n_rows, n_cols = (int(v) for v in lines[0].split())
    grid = np.array([[int(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.int64)
    if grid.shape != (n_rows, n_cols):
        raise ValueError(f"{path}: grid shape {grid.shape} does not match header {(n_rows, n_cols)}")
    return PnCodebook(geometry, grid.T, seed)
