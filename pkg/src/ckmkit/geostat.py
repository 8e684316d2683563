"""Gain-map construction from sparse samples.

Empirical semivariogram (Matheron moment estimator), exponential/spherical
variogram model fitting by profiled weighted least squares, ordinary Kriging
through the augmented (N+1) linear system with a Lagrange multiplier forcing
unit weight sum, plus KNN and analytic-LoS baselines and the MAE metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist

from .core import (ChannelSample, GainGrid, GridSpec, Position2D,
                   samples_to_arrays)

__all__ = [
    "EmpiricalVariogram",
    "SemivariogramParams",
    "KrigingSystem",
    "empirical_semivariogram",
    "gamma_value",
    "fit_semivariogram",
    "build_kriging_system",
    "kriging_weights",
    "kriging_predict",
    "knn_predict",
    "los_model_predict",
    "construct_ckm",
    "fit_params_for_samples",
    "mae",
]

VARIOGRAM_KINDS = ("exponential", "spherical")


@dataclass(frozen=True, eq=False)
class EmpiricalVariogram:
    """Binned semivariance estimates: lag centers, values, pair counts."""

    lag_centers: np.ndarray
    semivariances: np.ndarray
    pair_counts: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.lag_centers, dtype=float)
        g = np.asarray(self.semivariances, dtype=float)
        n = np.asarray(self.pair_counts, dtype=int)
        if not (h.size == g.size == n.size):
            raise ValueError("bin arrays must have equal length")
        if h.size and np.any(np.diff(h) <= 0):
            raise ValueError("lag centers must be strictly increasing")
        if np.any(g < 0) or np.any(n < 1):
            raise ValueError("invalid bin contents")
        object.__setattr__(self, "lag_centers", h)
        object.__setattr__(self, "semivariances", g)
        object.__setattr__(self, "pair_counts", n)

    @property
    def n_bins(self) -> int:
        return self.lag_centers.size


@dataclass(frozen=True)
class SemivariogramParams:
    """Fitted variogram model: nugget a, partial sill b, range scale c."""

    kind: str
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.kind not in VARIOGRAM_KINDS:
            raise ValueError(f"unknown variogram kind {self.kind!r}")
        if self.a < 0 or self.b <= 0 or self.c <= 0:
            raise ValueError("require a >= 0, b > 0, c > 0")


def empirical_semivariogram(samples: list[ChannelSample], bin_width: float,
                            max_lag: float) -> EmpiricalVariogram:
    """Matheron moment estimator over half-open distance bins [k*w, (k+1)*w).

    Each unordered pair contributes once; bins beyond max_lag are dropped, as
    are empty bins. Bin centers are the geometric bin midpoints.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    if bin_width <= 0 or max_lag <= 0:
        raise ValueError("bin_width and max_lag must be > 0")
    pos, vals = samples_to_arrays(samples)
    d = pdist(pos)
    # 0.5 * squared gain difference per pair, in the same pair order as pdist
    n = len(samples)
    iu = np.triu_indices(n, k=1)
    g = 0.5 * (vals[iu[0]] - vals[iu[1]]) ** 2
    keep = d < max_lag
    d, g = d[keep], g[keep]
    idx = np.floor(d / bin_width).astype(int)
    n_bins = int(math.ceil(max_lag / bin_width))
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=g, minlength=n_bins)
    nonempty = counts > 0
    centers = (np.arange(n_bins) + 0.5) * bin_width
    with np.errstate(invalid="ignore"):
        means = np.where(nonempty, sums / np.maximum(counts, 1), 0.0)
    return EmpiricalVariogram(centers[nonempty], means[nonempty],
                              counts[nonempty])


def _shape(kind: str, h: np.ndarray, c: float) -> np.ndarray:
    """Unit-sill variogram shape (1 - correlogram) at lags h."""
    if kind == "exponential":
        return 1.0 - np.exp(-h / c)
    r = h / c
    return np.where(h <= c, 1.5 * r - 0.5 * r ** 3, 1.0)


def gamma_value(params: SemivariogramParams, h) -> float | np.ndarray:
    """Model semivariance at lag h >= 0.

    Exponential: a + b(1 - exp(-h/c)). Spherical: a + b(3h/2c - (h/c)^3/2)
    for h <= c, continued as the constant plateau a + b beyond the range.
    """
    arr = np.asarray(h, dtype=float)
    if np.any(arr < 0):
        raise ValueError("lag must be >= 0")
    out = params.a + params.b * _shape(params.kind, arr, params.c)
    return float(out) if arr.ndim == 0 else out


def _solve_ab(h, g, w, kind, c):
    """Weighted LS for (a, b) at fixed c, honoring a >= 0 and b > 0.

    Returns (a, b, cost) or None when no admissible fit exists at this c.
    """
    m = _shape(kind, h, c)
    sw = w.sum()
    swm = (w * m).sum()
    swm2 = (w * m * m).sum()
    swg = (w * g).sum()
    swmg = (w * m * g).sum()
    det = sw * swm2 - swm * swm
    a = b = None
    if det > 1e-12 * max(sw * swm2, 1e-300):
        a = (swm2 * swg - swm * swmg) / det
        b = (sw * swmg - swm * swg) / det
    if a is None or a < 0.0:
        # active nugget bound: refit the partial sill alone
        a = 0.0
        b = swmg / swm2 if swm2 > 0 else 0.0
    if not (np.isfinite(a) and np.isfinite(b)) or b <= 0.0:
        return None
    cost = float((w * (g - a - b * m) ** 2).sum())
    return float(a), float(b), cost


def fit_semivariogram(emp: EmpiricalVariogram, kind: str) -> SemivariogramParams:
    """Pair-count-weighted least-squares fit of a variogram model.

    The range c is profiled out: for each candidate c the (a, b) subproblem is
    solved in closed form, candidates sweep a logarithmic grid over the lag
    span and the best one is refined by golden-section search. Avoids general
    nonlinear solvers so refits are bit-reproducible.
    """
    if kind not in VARIOGRAM_KINDS:
        raise ValueError(f"unknown variogram kind {kind!r}")
    if emp.n_bins < 3:
        raise ValueError("need at least 3 variogram bins to fit 3 parameters")
    h = emp.lag_centers
    g = emp.semivariances
    w = emp.pair_counts.astype(float)
    if np.ptp(g) == 0.0:
        raise ValueError("degenerate fit: all semivariances equal")

    def cost_at(c):
        sol = _solve_ab(h, g, w, kind, c)
        return math.inf if sol is None else sol[2]

    log_lo = math.log(h[0] / 10.0)
    log_hi = math.log(h[-1] * 10.0)
    grid = np.linspace(log_lo, log_hi, 64)
    costs = [cost_at(math.exp(t)) for t in grid]
    best = int(np.argmin(costs))
    if not math.isfinite(costs[best]):
        raise ValueError("degenerate fit: no admissible (a, b, c) found")

    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - phi * (hi - lo)
    x2 = lo + phi * (hi - lo)
    f1, f2 = cost_at(math.exp(x1)), cost_at(math.exp(x2))
    for _ in range(120):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - phi * (hi - lo)
            f1 = cost_at(math.exp(x1))
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + phi * (hi - lo)
            f2 = cost_at(math.exp(x2))
        if hi - lo < 1e-14:
            break
    c = math.exp((lo + hi) / 2.0)
    sol = _solve_ab(h, g, w, kind, c)
    if sol is None:
        raise ValueError("degenerate fit: no admissible (a, b, c) found")
    a, b, _ = sol
    return SemivariogramParams(kind, a, b, c)


@dataclass(frozen=True, eq=False)
class KrigingSystem:
    """Factorized augmented Kriging system, reusable across targets.

    The (N+1)x(N+1) matrix holds pairwise model semivariances (zero diagonal),
    a unity row/column enforcing the unit weight sum, and a zero corner. Input
    positions are deduplicated keeping the first occurrence; kept_indices maps
    system rows back to the input order.
    """

    positions: np.ndarray
    params: SemivariogramParams
    kept_indices: np.ndarray
    n_input: int
    _lu: tuple

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def _factor_or_none(mat: np.ndarray):
    try:
        lu, piv = lu_factor(mat)
    except Exception:
        return None
    diag = np.abs(np.diag(lu))
    if not np.all(np.isfinite(lu)) or diag.min() <= 1e-13 * max(diag.max(), 1.0):
        return None
    return lu, piv


def build_kriging_system(sample_positions, params: SemivariogramParams) -> KrigingSystem:
    """Assemble and factorize the augmented system for a sample geometry.

    Duplicate positions are dropped (first kept) to protect the factorization;
    a singular factorization is retried once with 1e-10 diagonal jitter on the
    semivariance block before giving up.
    """
    pos = np.asarray(
        [[p.x, p.y] if isinstance(p, Position2D) else p for p in sample_positions],
        dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
        raise ValueError("need an (N, 2) position array with N >= 1")
    n_input = pos.shape[0]
    _, kept = np.unique(pos, axis=0, return_index=True)
    kept = np.sort(kept)
    pos = pos[kept]
    n = pos.shape[0]

    d = cdist(pos, pos)
    mat = np.zeros((n + 1, n + 1))
    mat[:n, :n] = gamma_value(params, d)
    np.fill_diagonal(mat[:n, :n], 0.0)
    mat[n, :n] = 1.0
    mat[:n, n] = 1.0

    fac = _factor_or_none(mat)
    if fac is None:
        mat[np.arange(n), np.arange(n)] += 1e-10
        fac = _factor_or_none(mat)
    if fac is None:
        raise RuntimeError("Kriging system singular even after diagonal jitter")
    return KrigingSystem(pos, params, kept, n_input, fac)


def _solve_targets(system: KrigingSystem, targets: np.ndarray) -> np.ndarray:
    """Solve the factorized system for many targets; returns (N+1, M)."""
    n = system.n
    d0 = cdist(system.positions, targets)
    rhs = np.empty((n + 1, targets.shape[0]))
    rhs[:n] = gamma_value(system.params, d0)
    rhs[n] = 1.0
    return lu_solve(system._lu, rhs)


def kriging_weights(system: KrigingSystem, target: Position2D):
    """Ordinary Kriging weights and Lagrange multiplier for one target.

    Weights sum to one (may be negative).
    """
    sol = _solve_targets(system, np.array([[target.x, target.y]]))
    return sol[:system.n, 0].copy(), float(-sol[system.n, 0])


def _align_values(system: KrigingSystem, gains) -> np.ndarray:
    vals = np.asarray([s.gain_db if isinstance(s, ChannelSample) else s
                       for s in gains], dtype=float)
    if vals.size == system.n:
        return vals
    if vals.size == system.n_input:
        return vals[system.kept_indices]
    raise ValueError(f"got {vals.size} gains for a {system.n}-sample system")


def kriging_predict(system: KrigingSystem, samples, target: Position2D) -> float:
    """Predicted gain at target: weighted sum of the sample gains."""
    vals = _align_values(system, samples)
    w, _ = kriging_weights(system, target)
    return float(w @ vals)


def knn_predict(samples: list[ChannelSample], target: Position2D, k: int) -> float:
    """Unweighted mean gain of the k nearest samples.

    Distance ties are broken by ascending input index.
    """
    n = len(samples)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    pos, vals = samples_to_arrays(samples)
    d = np.hypot(pos[:, 0] - target.x, pos[:, 1] - target.y)
    order = np.argsort(d, kind="stable")
    return float(vals[order[:k]].mean())


def los_model_predict(target: Position2D, gbs: Position2D, beta0_db: float,
                      uav_altitude: float, gbs_height: float) -> float:
    """Analytic inverse-square LoS gain in dB at the fixed UAV altitude."""
    r2 = ((target.x - gbs.x) ** 2 + (target.y - gbs.y) ** 2
          + (gbs_height - uav_altitude) ** 2)
    if r2 == 0.0:
        raise ValueError("target coincides with the GBS antenna")
    return beta0_db - 10.0 * math.log10(r2)


def fit_params_for_samples(samples: list[ChannelSample], kind: str,
                           bin_width: float, max_lag: float) -> SemivariogramParams:
    """Estimator + fit convenience used by the construction drivers."""
    emp = empirical_semivariogram(samples, bin_width, max_lag)
    return fit_semivariogram(emp, kind)


def construct_ckm(samples: list[ChannelSample], spec: GridSpec, method: str,
                  *, params: SemivariogramParams | None = None, k: int = 5,
                  gbs: Position2D | None = None, beta0_db: float = -30.0,
                  uav_altitude: float | None = None,
                  gbs_height: float | None = None,
                  neighborhood: int | None = None) -> GainGrid:
    """Fill every grid node with the chosen predictor.

    method "kriging" needs fitted params (the system is built and factorized
    once, then all nodes are RHS-only solves; a k-nearest neighborhood can cap
    per-target system size for very large N). method "knn" needs k; method
    "los" needs the GBS geometry.
    """
    gx, gy = spec.node_xy_arrays()
    targets = np.column_stack([gx, gy])

    if method == "kriging":
        if params is None:
            raise ValueError("kriging construction needs fitted params")
        pos, vals = samples_to_arrays(samples)
        if neighborhood is not None and neighborhood < pos.shape[0]:
            preds = _kriging_neighborhood(pos, vals, params, targets,
                                          neighborhood)
        else:
            system = build_kriging_system(pos, params)
            vals = vals[system.kept_indices]
            sol = _solve_targets(system, targets)
            preds = vals @ sol[:system.n]
        return GainGrid(spec, preds)

    if method == "knn":
        pos, vals = samples_to_arrays(samples)
        if not 1 <= k <= pos.shape[0]:
            raise ValueError(f"k must be in [1, {pos.shape[0]}]")
        tree = cKDTree(pos)
        d, idx = tree.query(targets, k=k)
        idx = idx.reshape(targets.shape[0], k)
        return GainGrid(spec, vals[idx].mean(axis=1))

    if method == "los":
        if gbs is None or uav_altitude is None or gbs_height is None:
            raise ValueError("los construction needs gbs, uav_altitude, gbs_height")
        r2 = ((gx - gbs.x) ** 2 + (gy - gbs.y) ** 2
              + (gbs_height - uav_altitude) ** 2)
        if np.any(r2 == 0.0):
            raise ValueError("a grid node coincides with the GBS antenna")
        return GainGrid(spec, beta0_db - 10.0 * np.log10(r2))

    raise ValueError(f"unknown construction method {method!r}")


def _kriging_neighborhood(pos, vals, params, targets, k):
    """Per-target k-nearest Kriging for sample sets too large to invert whole."""
    tree = cKDTree(pos)
    _, idx = tree.query(targets, k=k)
    preds = np.empty(targets.shape[0])
    for t in range(targets.shape[0]):
        sel = idx[t]
        system = build_kriging_system(pos[sel], params)
        sol = _solve_targets(system, targets[t:t + 1])
        preds[t] = vals[sel][system.kept_indices] @ sol[:system.n, 0]
    return preds


def mae(estimate: GainGrid, truth: GainGrid) -> float:
    """Mean absolute error between two grids on the same lattice, in dB."""
    if estimate.spec != truth.spec:
        raise ValueError("grids must share the same GridSpec")
    return float(np.mean(np.abs(estimate.gains_db - truth.gains_db)))
