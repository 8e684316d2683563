"""Shared domain types: positions, gain grids, scenarios, units, seeded RNG.

Gains are stored in dB everywhere; conversion to linear power ratios happens
only inside SINR evaluation. Grids are row-major with y as the slow axis.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Position2D",
    "Region",
    "GridSpec",
    "GainGrid",
    "ChannelSample",
    "Scenario",
    "SeededRng",
    "dbm_to_watts",
    "db_to_linear",
    "linear_to_db",
    "grid_node_lookup",
]


def dbm_to_watts(p_dbm: float) -> float:
    """Convert a power level in dBm to watts: 10^((p - 30) / 10)."""
    if not math.isfinite(p_dbm):
        raise ValueError(f"non-finite power: {p_dbm}")
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def db_to_linear(g_db):
    """Convert a dB quantity to a linear power ratio: 10^(g / 10)."""
    g = np.asarray(g_db, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite dB value")
    out = 10.0 ** (g / 10.0)
    return float(out) if np.isscalar(g_db) or g.ndim == 0 else out


def linear_to_db(ratio):
    """Inverse of db_to_linear; requires a strictly positive ratio."""
    r = np.asarray(ratio, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("linear power ratio must be > 0")
    out = 10.0 * np.log10(r)
    return float(out) if np.isscalar(ratio) or r.ndim == 0 else out


@dataclass(frozen=True)
class Position2D:
    """Horizontal location in meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")

    def distance_to(self, other: "Position2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Region:
    """Axis-aligned placement rectangle, shared by all UAVs."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("region must have positive area")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, x: float, y: float, tol: float = 0.0) -> bool:
        return (self.x_min - tol <= x <= self.x_max + tol
                and self.y_min - tol <= y <= self.y_max + tol)

    def bounds_vectors(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Elementwise (lo, hi) for a stacked placement vector of k UAVs."""
        lo = np.tile([self.x_min, self.y_min], k).astype(float)
        hi = np.tile([self.x_max, self.y_max], k).astype(float)
        return lo, hi

    def clamp(self, q: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds_vectors(len(q) // 2)
        return np.clip(q, lo, hi)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular lattice; node (i, j) sits at origin + (i, j) * spacing."""

    origin_x: float
    origin_y: float
    spacing: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be > 0")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 nodes per axis")

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def node_position(self, i: int, j: int) -> Position2D:
        return Position2D(self.origin_x + i * self.spacing,
                          self.origin_y + j * self.spacing)

    def flat_index(self, i: int, j: int) -> int:
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise IndexError(f"node ({i}, {j}) outside {self.nx}x{self.ny} grid")
        return j * self.nx + i

    def node_xy_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat x and y coordinate arrays in row-major node order."""
        xs = self.origin_x + self.spacing * np.arange(self.nx)
        ys = self.origin_y + self.spacing * np.arange(self.ny)
        gx, gy = np.meshgrid(xs, ys)
        return gx.ravel(), gy.ravel()

    def bounding_region(self) -> Region:
        return Region(self.origin_x, self.origin_x + (self.nx - 1) * self.spacing,
                      self.origin_y, self.origin_y + (self.ny - 1) * self.spacing)


@dataclass(frozen=True, eq=False)
class GainGrid:
    """Channel power gains in dB on a GridSpec lattice, row-major (y slow)."""

    spec: GridSpec
    gains_db: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.gains_db, dtype=float).ravel()
        if arr.size != self.spec.n_nodes:
            raise ValueError(
                f"expected {self.spec.n_nodes} gains, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("gain grid contains non-finite values")
        object.__setattr__(self, "gains_db", arr)

    def grid2d(self) -> np.ndarray:
        """(ny, nx) view, grid2d[j, i] == gains_db[j*nx + i]."""
        return self.gains_db.reshape(self.spec.ny, self.spec.nx)


def grid_node_lookup(grid: GainGrid, i: int, j: int) -> float:
    """Gain in dB at node (i, j); raises IndexError out of range."""
    return float(grid.gains_db[grid.spec.flat_index(i, j)])


@dataclass(frozen=True)
class ChannelSample:
    """One (position, gain) measurement pair."""

    position: Position2D
    gain_db: float

    def __post_init__(self):
        if not math.isfinite(self.gain_db):
            raise ValueError("sample gain must be finite")


def samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into an (N, 2) position array and an (N,) gain array."""
    if len(samples) == 0:
        return np.zeros((0, 2)), np.zeros(0)
    pos = np.array([[s.position.x, s.position.y] for s in samples], dtype=float)
    vals = np.array([s.gain_db for s in samples], dtype=float)
    return pos, vals


@dataclass(frozen=True)
class Scenario:
    """GBS sites, UAV powers, noise levels, rate weights and placement bounds.

    All per-GBS lists have length K. The UAV altitude is fixed and must
    exceed the GBS height.
    """

    gbs_positions: tuple[Position2D, ...]
    gbs_height: float
    uav_altitude: float
    tx_power_dbm: tuple[float, ...]
    noise_power_dbm: tuple[float, ...]
    rate_weights: tuple[float, ...]
    region: Region

    def __post_init__(self):
        k = len(self.gbs_positions)
        if k < 1:
            raise ValueError("need at least one GBS")
        for name in ("tx_power_dbm", "noise_power_dbm", "rate_weights"):
            vals = getattr(self, name)
            if len(vals) != k:
                raise ValueError(f"{name} must have length {k}")
        if any(w <= 0 for w in self.rate_weights):
            raise ValueError("rate weights must be strictly positive")
        if not self.uav_altitude > self.gbs_height:
            raise ValueError("UAV altitude must exceed GBS height")

    @property
    def k(self) -> int:
        return len(self.gbs_positions)

    def with_tx_power(self, p_dbm: float) -> "Scenario":
        """Copy with every UAV transmit power set to p_dbm."""
        return Scenario(self.gbs_positions, self.gbs_height, self.uav_altitude,
                        (p_dbm,) * self.k, self.noise_power_dbm,
                        self.rate_weights, self.region)


@dataclass(frozen=True)
class SeededRng:
    """Counter-based generator handle: (seed, stream) pins the draw sequence.

    Streams are derived by name so adding draws in one module never perturbs
    another. Identical (seed, stream) gives identical sequences across runs.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError("seed must fit in 64 bits")

    def child(self, name) -> "SeededRng":
        tag = f"{self.stream}/{name}".encode()
        return SeededRng(self.seed, zlib.crc32(tag))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(seq))
