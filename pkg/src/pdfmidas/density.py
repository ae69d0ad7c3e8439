"""Densities on equidistant grids: KDE, distances and moment summaries.

Every integral here is a trapezoid rule over the grid nodes, so that
distances, moments and CDFs are computed from the same discretization the
estimator works with.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import DegenerateSample, GridMismatch, GridTooNarrow, InvalidDensity

MASS_TOL = 1e-2
DISTANCE_KINDS = ("L1", "L2", "Linf", "Hellinger")

_SQRT_2PI = math.sqrt(2.0 * math.pi)
# Kernel tails beyond this many bandwidths are dropped (relative size < 2e-22).
_KERNEL_REACH = 10.0
_CHUNK = 4_000_000


@dataclass(frozen=True)
class Grid:
    """``n_points`` equidistant nodes spanning ``[lo, hi]``."""

    lo: float
    hi: float
    n_points: int = 30

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
            raise ValueError(f"grid needs finite lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.n_points}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n_points - 1)

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.linspace(self.lo, self.hi, self.n_points)
        pts.flags.writeable = False
        return pts

    @classmethod
    def covering(cls, samples: Iterable[Sequence[float]], n_points: int = 30, pad: float = 3.0) -> "Grid":
        """Grid over the pooled sample range padded by ``pad`` times the largest bandwidth."""
        lo, hi, widest = math.inf, -math.inf, 0.0
        for x in samples:
            x = np.asarray(x, dtype=float)
            if x.size == 0:
                continue
            lo, hi = min(lo, float(x.min())), max(hi, float(x.max()))
            try:
                widest = max(widest, bandwidth(x))
            except (DegenerateSample, ValueError):
                pass
        if not math.isfinite(lo):
            raise ValueError("no samples to build a grid from")
        if widest == 0.0:
            widest = max(abs(hi - lo), 1.0) * 0.1
        return cls(lo - pad * widest, hi + pad * widest, n_points)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "n_points": self.n_points}


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Density heights ``values[i] = f(s_i)`` on ``grid``.

    Heights must be finite and nonnegative. The trapezoid mass must lie
    within ``MASS_TOL`` of one unless ``check_mass=False`` is passed, which
    is reserved for KDE output on a grid that clips the kernel tails.
    """

    grid: Grid
    values: np.ndarray
    check_mass: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise InvalidDensity(f"expected {self.grid.n_points} heights, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidDensity("density heights must be finite")
        if np.any(v < 0):
            raise InvalidDensity(f"density heights must be nonnegative (min {v.min():.3g})")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.check_mass:
            mass = self.mass()
            if abs(mass - 1.0) > MASS_TOL:
                raise InvalidDensity(f"density mass {mass:.6f} is not within {MASS_TOL} of 1")

    def mass(self) -> float:
        return float(trapezoid(self.values, dx=self.grid.spacing))

    def normalized(self) -> "DensityGrid":
        return DensityGrid(self.grid, self.values / self.mass())

    def __eq__(self, other):
        if not isinstance(other, DensityGrid):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None


def normal_pdf(grid: Grid, mean: float, sd: float) -> np.ndarray:
    z = (grid.points - mean) / sd
    return np.exp(-0.5 * z * z) / (sd * _SQRT_2PI)


def bandwidth(samples) -> float:
    """Rule-of-thumb window width ``0.9 * min(sd, IQR/1.34) * n**-0.2``.

    ``sd`` uses divisor ``n - 1`` and the quartiles use linear interpolation
    between order statistics.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("bandwidth needs at least two observations")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75.0, 25.0])
    spread = min(sd, float(q75 - q25) / 1.34)
    if spread <= 0.0:
        raise DegenerateSample("sample spread is zero; pass an explicit bandwidth")
    return 0.9 * spread * x.size ** -0.2


_rule_of_thumb = bandwidth


def bandwidth_rows(samples: np.ndarray) -> np.ndarray:
    """Row-wise :func:`bandwidth` for a ``(B, M)`` batch of samples."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[1] < 2:
        raise ValueError("bandwidth needs at least two observations")
    sd = np.std(x, axis=1, ddof=1)
    q75, q25 = np.percentile(x, [75.0, 25.0], axis=1)
    spread = np.minimum(sd, (q75 - q25) / 1.34)
    if np.any(spread <= 0.0):
        raise DegenerateSample("a sample in the batch has zero spread")
    return 0.9 * spread * x.shape[1] ** -0.2


def kde_heights(samples: np.ndarray, grid: Grid, bandwidths) -> np.ndarray:
    """Gaussian KDE heights for a batch of equal-size samples.

    ``samples`` has shape ``(B, M)`` and ``bandwidths`` shape ``(B,)``;
    returns a ``(B, N)`` array. Only grid nodes within reach of each
    observation are evaluated, which keeps large simulation batches cheap.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    bw = np.broadcast_to(np.asarray(bandwidths, dtype=float), (x.shape[0],))
    if np.any(bw <= 0):
        raise ValueError("bandwidth must be positive")
    B, M = x.shape
    N, ds, lo = grid.n_points, grid.spacing, grid.lo
    half = int(math.ceil(_KERNEL_REACH * bw.max() / ds)) + 1
    out = np.empty((B, N))
    if 2 * half + 1 >= N:
        nodes = grid.points
        step = max(1, _CHUNK // max(1, M * N))
        for b0 in range(0, B, step):
            z = (nodes[None, None, :] - x[b0:b0 + step, :, None]) / bw[b0:b0 + step, None, None]
            out[b0:b0 + step] = np.exp(-0.5 * z * z).sum(axis=1)
    else:
        # Accumulate each offset from the nearest node into a padded row, so
        # no per-node masking is needed; far-off samples are dropped.
        # a kept sample's nearest node lies within half nodes of the grid and its
        # kernel reaches half nodes further, so rows are padded by 2 * half
        pad = 2 * half
        width = N + 2 * pad
        step = max(1, _CHUNK // M)
        for b0 in range(0, B, step):
            xb, lb = x[b0:b0 + step], bw[b0:b0 + step, None]
            nb = xb.shape[0]
            j = np.rint((xb - lo) / ds)
            keep = (j >= -half) & (j <= N - 1 + half)
            j = np.where(keep, j, 0.0)
            z0 = np.where(keep, (lo + j * ds - xb) / lb, np.inf)
            c = ds / lb
            base = (np.arange(nb)[:, None] * width + j.astype(np.int64) + pad).ravel()
            acc = np.zeros(nb * width)
            for off in range(-half, half + 1):
                z = z0 + off * c
                acc += np.bincount(base + off, np.exp(-0.5 * z * z).ravel(), minlength=nb * width)
            out[b0:b0 + nb] = acc.reshape(nb, width)[:, pad:pad + N]
    out /= (M * bw * _SQRT_2PI)[:, None]
    return out


def kde(samples, grid: Grid, bandwidth: float | None = None) -> DensityGrid:
    """Gaussian kernel density estimate evaluated on ``grid``.

    Without an explicit ``bandwidth`` the rule-of-thumb width is used. Emits
    ``GridTooNarrow`` when less than 99% of the estimated mass falls on the
    grid; the heights are returned unnormalized either way.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("kde needs at least one observation")
    if bandwidth is None:
        bandwidth = _rule_of_thumb(x)
    heights = kde_heights(x[None, :], grid, bandwidth)[0]
    mass = float(trapezoid(heights, dx=grid.spacing))
    if mass < 0.99:
        warnings.warn(f"KDE mass on grid is {mass:.4f}; widen the grid", GridTooNarrow, stacklevel=2)
    return DensityGrid(grid, heights, check_mass=abs(mass - 1.0) <= MASS_TOL)


def _same_grid(f: DensityGrid, g: DensityGrid) -> Grid:
    if f.grid != g.grid:
        raise GridMismatch(f"densities live on different grids: {f.grid} vs {g.grid}")
    return f.grid


def distance(f: DensityGrid, g: DensityGrid, kind: str = "L2") -> float:
    """L1, L2, Linf or Hellinger distance between two gridded densities.

    The Hellinger variant is the unhalved squared form
    ``integral (sqrt f - sqrt g)^2``.
    """
    grid = _same_grid(f, g)
    key = kind.lower()
    diff = f.values - g.values
    if key == "l1":
        return float(trapezoid(np.abs(diff), dx=grid.spacing))
    if key == "l2":
        return math.sqrt(float(trapezoid(diff * diff, dx=grid.spacing)))
    if key == "linf":
        return float(np.max(np.abs(diff)))
    if key == "hellinger":
        r = np.sqrt(f.values) - np.sqrt(g.values)
        return float(trapezoid(r * r, dx=grid.spacing))
    raise ValueError(f"unknown distance kind {kind!r}; choose from {DISTANCE_KINDS}")


def mse(f: DensityGrid, g: DensityGrid) -> float:
    """Squared L2 distance, the out-of-sample error used to rank forecasts."""
    return distance(f, g, "L2") ** 2


def cdf(f: DensityGrid) -> np.ndarray:
    """Trapezoid CDF at the grid nodes after renormalizing to unit mass."""
    c = cumulative_trapezoid(f.values, dx=f.grid.spacing, initial=0.0)
    return c / c[-1]


def wasserstein1(f: DensityGrid, g: DensityGrid) -> float:
    """Order-1 Wasserstein distance ``integral |F - G|`` on the shared grid."""
    grid = _same_grid(f, g)
    return float(trapezoid(np.abs(cdf(f) - cdf(g)), dx=grid.spacing))


class MomentSummary(NamedTuple):
    mean: float
    sd: float
    q25: float
    median: float
    q75: float
    skewness: float
    excess_kurtosis: float


def quantile(f: DensityGrid, prob: float) -> float:
    return float(np.interp(prob, cdf(f), f.grid.points))


def moments(f: DensityGrid) -> MomentSummary:
    """Mean, SD, quartiles, skewness and excess kurtosis of a gridded density."""
    x = f.grid.points
    w = f.values / f.mass()
    ds = f.grid.spacing
    mean = float(trapezoid(x * w, dx=ds))
    d = x - mean
    var = float(trapezoid(d * d * w, dx=ds))
    sd = math.sqrt(var)
    skew = float(trapezoid(d ** 3 * w, dx=ds)) / sd ** 3
    kurt = float(trapezoid(d ** 4 * w, dx=ds)) / var ** 2 - 3.0
    F = cdf(f)
    q25, med, q75 = np.interp([0.25, 0.5, 0.75], F, x)
    return MomentSummary(mean, sd, float(q25), float(med), float(q75), skew, kurt)
