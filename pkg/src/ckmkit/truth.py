"""Synthetic ground-truth gain maps: buildings, LoS/NLoS path loss, shadowing.

Stands in for a ray-traced dataset. Shadowing is a zero-mean Gaussian field
with exponential covariance, so the exponential variogram model used for map
construction is well-specified and the whole pipeline can be validated against
known field parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .core import (ChannelSample, GainGrid, GridSpec, Position2D, Region,
                   SeededRng)

__all__ = [
    "Box",
    "BuildingLayout",
    "TruthParams",
    "generate_layout",
    "los_blocked",
    "gaussian_random_field",
    "generate_truth_ckm",
    "sample_measurements",
    "sample_random",
]

# Dense-factorization budget for the shadowing field.
MAX_FIELD_NODES = 10_000

# Invented building-size defaults: footprint sides as a fraction of the
# shorter region side, heights in meters (below a 50 m UAV altitude so the
# blockage happens on the low, GBS end of the link).
_SIDE_FRAC = (0.06, 0.20)
_HEIGHT_RANGE = (10.0, 45.0)


@dataclass(frozen=True)
class Box:
    """Axis-aligned building footprint with a flat roof height."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    height: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("box must have positive footprint")
        if self.height <= 0:
            raise ValueError("box height must be > 0")

    def overlaps(self, other: "Box") -> bool:
        return not (self.x_max <= other.x_min or other.x_max <= self.x_min
                    or self.y_max <= other.y_min or other.y_max <= self.y_min)

    def contains_xy(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class BuildingLayout:
    boxes: tuple[Box, ...]


@dataclass(frozen=True)
class TruthParams:
    """Synthetic propagation parameters.

    beta0_db is the gain at the 1 m reference distance; the remaining values
    are documented synthetic defaults (the exponents, NLoS penalty and
    shadowing scales have no measured counterpart here).
    """

    beta0_db: float = -30.0
    n_los: float = 2.2
    n_nlos: float = 3.5
    nlos_penalty_db: float = 20.0
    shadow_std_db: float = 4.0
    shadow_corr_len: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.n_los <= 0 or self.n_nlos <= 0:
            raise ValueError("path-loss exponents must be > 0")
        if self.shadow_std_db < 0:
            raise ValueError("shadowing std must be >= 0")
        if self.shadow_corr_len <= 0:
            raise ValueError("shadowing correlation length must be > 0")


def generate_layout(region: Region, n_buildings: int, rng: SeededRng,
                    keep_clear: tuple[Position2D, ...] = ()) -> BuildingLayout:
    """Sample n pairwise-disjoint boxes inside region, deterministically.

    Boxes never contain a keep_clear point (e.g. GBS sites). Raises if the
    region cannot host the requested count within a bounded retry budget.
    """
    if n_buildings < 0:
        raise ValueError("n_buildings must be >= 0")
    gen = rng.generator()
    side_lo = _SIDE_FRAC[0] * min(region.width, region.height)
    side_hi = _SIDE_FRAC[1] * min(region.width, region.height)
    boxes: list[Box] = []
    attempts = 0
    max_attempts = 200 * max(n_buildings, 1)
    while len(boxes) < n_buildings:
        if attempts >= max_attempts:
            raise RuntimeError(
                f"could not place {n_buildings} disjoint buildings in "
                f"{region.width:.0f}x{region.height:.0f} m after "
                f"{max_attempts} attempts; shrink the count or grow the region")
        attempts += 1
        w = gen.uniform(side_lo, side_hi)
        h = gen.uniform(side_lo, side_hi)
        x0 = gen.uniform(region.x_min, region.x_max - w)
        y0 = gen.uniform(region.y_min, region.y_max - h)
        height = gen.uniform(*_HEIGHT_RANGE)
        cand = Box(x0, x0 + w, y0, y0 + h, height)
        if any(cand.overlaps(b) for b in boxes):
            continue
        if any(cand.contains_xy(p.x, p.y) for p in keep_clear):
            continue
        boxes.append(cand)
    return BuildingLayout(tuple(boxes))


def _segment_rect_interval(p0, p1, box: Box):
    """Liang-Barsky clip of the 2D segment p0->p1 against a footprint.

    Returns (t0, t1) in [0, 1] for the part inside the rectangle, or None.
    """
    t0, t1 = 0.0, 1.0
    for lo, hi, a, d in ((box.x_min, box.x_max, p0[0], p1[0] - p0[0]),
                         (box.y_min, box.y_max, p0[1], p1[1] - p0[1])):
        if d == 0.0:
            if a < lo or a > hi:
                return None
            continue
        ta, tb = (lo - a) / d, (hi - a) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return None
    return t0, t1


def los_blocked(layout: BuildingLayout, tx: tuple[float, float, float],
                rx: tuple[float, float, float]) -> bool:
    """True iff the 3D segment tx->rx passes through a box below its roof.

    The segment height is linear in the clip parameter, so only the interval
    endpoints need checking.
    """
    if tx == rx:
        raise ValueError("tx and rx must differ")
    for box in layout.boxes:
        hit = _segment_rect_interval(tx[:2], rx[:2], box)
        if hit is None:
            continue
        t0, t1 = hit
        z0 = tx[2] + t0 * (rx[2] - tx[2])
        z1 = tx[2] + t1 * (rx[2] - tx[2])
        if min(z0, z1) < box.height:
            return True
    return False


def gaussian_random_field(spec: GridSpec, std_db: float, corr_len: float,
                          rng: SeededRng) -> GainGrid:
    """Zero-mean field with Cov(u, v) = std^2 * exp(-|u - v| / corr_len).

    Realized by dense Cholesky factorization of the node covariance matrix;
    grids beyond the factorization budget are rejected.
    """
    if std_db < 0:
        raise ValueError("std_db must be >= 0")
    if corr_len <= 0:
        raise ValueError("corr_len must be > 0")
    if spec.n_nodes > MAX_FIELD_NODES:
        raise ValueError(
            f"{spec.nx}x{spec.ny} grid exceeds the dense-factorization budget "
            f"of {MAX_FIELD_NODES} nodes; use a coarser grid")
    if std_db == 0.0:
        return GainGrid(spec, np.zeros(spec.n_nodes))
    factor = _field_factor(spec, std_db, corr_len)
    z = rng.generator().standard_normal(spec.n_nodes)
    return GainGrid(spec, factor @ z)


def _field_factor(spec: GridSpec, std_db: float, corr_len: float) -> np.ndarray:
    gx, gy = spec.node_xy_arrays()
    dist = squareform(pdist(np.column_stack([gx, gy])))
    cov = std_db ** 2 * np.exp(-dist / corr_len)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov[np.diag_indices_from(cov)] += 1e-8
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("covariance factorization failed even with "
                               "diagonal jitter") from exc


def generate_truth_ckm(layout: BuildingLayout, gbs: Position2D,
                       uav_altitude: float, gbs_height: float, spec: GridSpec,
                       params: TruthParams, rng: SeededRng,
                       shadow: GainGrid | None = None) -> GainGrid:
    """Ground-truth gain map for one GBS at a fixed UAV altitude.

    Per node: LoS/NLoS log-distance path loss from the GBS antenna to the node
    at UAV altitude, plus one shared shadowing realization. The 3D distance is
    clamped at the 1 m reference. A precomputed shadow field may be passed so
    several maps can share one factorization.
    """
    if shadow is None:
        shadow = gaussian_random_field(spec, params.shadow_std_db,
                                       params.shadow_corr_len, rng)
    elif shadow.spec != spec:
        raise ValueError("shadow field spec does not match the target grid")
    gx, gy = spec.node_xy_arrays()
    d3 = np.sqrt((gx - gbs.x) ** 2 + (gy - gbs.y) ** 2
                 + (uav_altitude - gbs_height) ** 2)
    d3 = np.maximum(d3, 1.0)
    tx = (gbs.x, gbs.y, gbs_height)
    blocked = np.fromiter(
        (los_blocked(layout, tx, (x, y, uav_altitude))
         for x, y in zip(gx, gy)),
        dtype=bool, count=spec.n_nodes)
    gains = np.where(
        blocked,
        params.beta0_db - 10.0 * params.n_nlos * np.log10(d3)
        - params.nlos_penalty_db,
        params.beta0_db - 10.0 * params.n_los * np.log10(d3))
    return GainGrid(spec, gains + shadow.gains_db)


def sample_measurements(truth: GainGrid, stride_x_nodes: int,
                        stride_y_nodes: int) -> list[ChannelSample]:
    """Lattice samples at nodes with i % stride_x == 0 and j % stride_y == 0.

    Index 0 is always included, so a 61-column grid strided by 15 yields the
    5-column pattern (305 samples on 61x61, not a round 300).
    """
    if stride_x_nodes < 1 or stride_y_nodes < 1:
        raise ValueError("strides must be >= 1")
    spec = truth.spec
    out = []
    for j in range(0, spec.ny, stride_y_nodes):
        for i in range(0, spec.nx, stride_x_nodes):
            out.append(ChannelSample(spec.node_position(i, j),
                                     float(truth.gains_db[j * spec.nx + i])))
    return out


def sample_random(truth: GainGrid, n: int, rng: SeededRng) -> list[ChannelSample]:
    """n distinct nodes drawn uniformly without replacement."""
    total = truth.spec.n_nodes
    if not 1 <= n <= total:
        raise ValueError(f"n must be in [1, {total}], got {n}")
    flat = np.sort(rng.generator().choice(total, size=n, replace=False))
    spec = truth.spec
    return [ChannelSample(spec.node_position(int(f % spec.nx), int(f // spec.nx)),
                          float(truth.gains_db[f]))
            for f in flat]
