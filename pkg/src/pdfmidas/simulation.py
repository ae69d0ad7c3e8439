"""Monte Carlo studies of the PDF-MIDAS estimator.

Regressor ``k`` at lag ``i`` of period ``t`` is normal with mean
``drift_k * t + i / m_k`` and variance ``variance_k``; the target density of
period ``t`` is the exact Almon/combination-weighted mixture of those
normals. Each replication draws ``M`` observations per density (normals
directly, the target by accept/reject), smooths them by KDE, fits the model
and records the estimates.

Because the lag law depends on the period ``t`` as well as on ``i``, each
period owns its own regressor observations. Target times are therefore
spaced ``period`` units apart, which keeps every period's lag window
disjoint from its neighbours'.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import almon
from .density import DensityGrid, Grid, bandwidth_rows, kde_heights
from .errors import EnvelopeViolation
from .estimation import FitConfig, TrainingSet, fit
from .model import MixedSeries, ModelSpec, RegressorSpec, as_time

log = logging.getLogger(__name__)

_SQRT_2PI = math.sqrt(2.0 * math.pi)
ENVELOPE_SAFETY = 1.01


@dataclass(frozen=True)
class RegressorLaw:
    """Almon parameters and normal lag law of one simulated regressor."""

    theta: tuple[float, ...] = (-0.05,)
    m: int = 3
    p: int = 12
    drift: float = 0.01
    variance: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(x) for x in np.ravel(self.theta)))
        almon.AlmonSpec(len(self.theta), self.p)
        if self.m < 1 or self.variance <= 0:
            raise ValueError("need m >= 1 and a positive variance")

    @property
    def q(self) -> int:
        return len(self.theta)

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def lag_weights(self) -> np.ndarray:
        return almon.weights(almon.AlmonSpec(self.q, self.p), self.theta)


@dataclass(frozen=True)
class SimDesign:
    regressors: tuple[RegressorLaw, ...] = (RegressorLaw(),)
    a: tuple[float, ...] | None = None
    T: int = 100
    M: int = 100
    h: Fraction = Fraction(1, 3)
    R: int = 100
    seed: int = 0
    n_points: int = 30
    period: int | None = None
    holdout: int = 0
    fine_points: int = 2001

    def __post_init__(self):
        regs = tuple(self.regressors)
        object.__setattr__(self, "regressors", regs)
        object.__setattr__(self, "h", as_time(self.h))
        if not regs:
            raise ValueError("a design needs at least one regressor")
        a = (1.0,) if self.a is None and len(regs) == 1 else self.a
        if a is None or len(a) != len(regs):
            raise ValueError("give one combination weight per regressor")
        a = tuple(float(x) for x in a)
        if min(a) < 0 or abs(sum(a) - 1.0) > 1e-12:
            raise ValueError("combination weights must be nonnegative and sum to 1")
        object.__setattr__(self, "a", a)
        if min(self.T, self.M, self.R) < 1:
            raise ValueError("T, M and R must be >= 1")
        if not 0 <= self.holdout < self.T:
            raise ValueError("holdout must leave at least one training period")
        for r in regs:
            if (self.h * r.m).denominator != 1:
                raise ValueError(f"h={self.h} is not a multiple of 1/{r.m}")
        if self.period is None:
            object.__setattr__(self, "period", max((r.p - 1) // r.m + 1 for r in regs))
        elif any(self.period * r.m < r.p for r in regs):
            raise ValueError("period too short: lag windows of consecutive targets would overlap")

    @classmethod
    def univariate(cls, T=100, M=100, p=12, theta=(-0.05,), **kw) -> "SimDesign":
        return cls((RegressorLaw(tuple(theta), 3, p, 0.01, 1.0),), (1.0,), T, M, **kw)

    @classmethod
    def multivariate(cls, T=100, M=100, p=12, **kw) -> "SimDesign":
        regs = (RegressorLaw((-0.05,), 3, p, 0.01, 1.0), RegressorLaw((0.2, -0.03), 3, p, 0.012, 2.0))
        return cls(regs, (0.4, 0.6), T, M, **kw)

    @property
    def K(self) -> int:
        return len(self.regressors)

    @property
    def variant(self) -> str:
        return "univariate" if self.K == 1 else "multivariate"

    @property
    def series_ids(self) -> tuple[str, ...]:
        return tuple(f"g{k + 1}" for k in range(self.K))

    def target_time(self, t: int) -> Fraction:
        return Fraction(t * self.period)

    def model_spec(self) -> ModelSpec:
        return ModelSpec(tuple(
            RegressorSpec(sid, r.m, r.p, self.h, r.q) for sid, r in zip(self.series_ids, self.regressors)
        ))

    def lag_means(self, k: int, periods=None) -> np.ndarray:
        """``(T, p_k)`` regressor means ``drift * t + i / m``."""
        r = self.regressors[k]
        t = np.arange(1, self.T + 1) if periods is None else np.asarray(periods)
        return r.drift * t[:, None] + np.arange(1, r.p + 1)[None, :] / r.m

    def grid(self) -> Grid:
        lo = min(self.lag_means(k).min() for k in range(self.K))
        hi = max(self.lag_means(k).max() for k in range(self.K))
        pad = 4.0 * max(r.sd for r in self.regressors)
        return Grid(lo - pad, hi + pad, self.n_points)

    def param_names(self) -> tuple[str, ...]:
        if self.K == 1:
            return tuple(f"theta_{j + 1}" for j in range(self.regressors[0].q))
        names = [f"a_{k + 1}" for k in range(self.K)]
        for k, r in enumerate(self.regressors):
            names += [f"theta_{k + 1}_{j + 1}" for j in range(r.q)]
        return tuple(names)

    def true_params(self) -> np.ndarray:
        vals = [] if self.K == 1 else list(self.a)
        for r in self.regressors:
            vals += list(r.theta)
        return np.array(vals)


def _target_heights(design: SimDesign, periods, x: np.ndarray) -> np.ndarray:
    """Exact target density of each period at the points ``x``, shape ``(len(periods), len(x))``."""
    periods = np.atleast_1d(periods)
    out = np.zeros((periods.size, x.size))
    for k, r in enumerate(design.regressors):
        mu = design.lag_means(k, periods)
        coef = design.a[k] * r.lag_weights()
        z = (x[None, None, :] - mu[:, :, None]) / r.sd
        out += np.einsum("p,tpx->tx", coef, np.exp(-0.5 * z * z)) / (r.sd * _SQRT_2PI)
    return out


def generate_truth(design: SimDesign, t: int, lag: int | None = None, k: int = 0,
                   grid: Grid | None = None) -> DensityGrid:
    """True density on ``grid``: regressor ``k`` at lag ``lag`` of period ``t``, or the target when ``lag`` is None."""
    grid = grid or design.grid()
    if lag is None:
        return DensityGrid(grid, _target_heights(design, [t], grid.points)[0])
    r = design.regressors[k]
    mean = r.drift * t + lag / r.m
    z = (grid.points - mean) / r.sd
    return DensityGrid(grid, np.exp(-0.5 * z * z) / (r.sd * _SQRT_2PI))


def sample_accept_reject(target: DensityGrid, M: int, rng: np.random.Generator,
                         info: dict | None = None) -> np.ndarray:
    """Draw ``M`` points from the piecewise-linear interpolant of ``target``.

    Proposals are uniform on the grid interval and are accepted when a
    uniform height under the envelope ``1.01 * max(target)`` falls below the
    interpolated density. Pass a dict as ``info`` to receive the proposal and
    acceptance counts.
    """
    grid = target.grid
    x_nodes, heights = grid.points, target.values
    ceiling = ENVELOPE_SAFETY * float(heights.max())
    if ceiling <= 0:
        raise ValueError("target density is identically zero")
    rate = float(target.mass()) / (ceiling * (grid.hi - grid.lo))
    out = np.empty(0)
    proposed = accepted = 0
    while out.size < M:
        need = M - out.size
        n = int(math.ceil(need / rate * 1.1)) + 16
        x = rng.uniform(grid.lo, grid.hi, n)
        fx = np.interp(x, x_nodes, heights)
        if fx.max() > ceiling:
            raise EnvelopeViolation("interpolated density exceeds the envelope")
        u = rng.uniform(0.0, ceiling, n)
        keep = x[u < fx]
        proposed += n
        accepted += keep.size
        out = np.concatenate([out, keep])
    if info is not None:
        info.update(proposed=proposed, accepted=accepted)
    return out[:M]


@dataclass(frozen=True, eq=False)
class SimData:
    """Raw draws of one replication.

    ``target_samples`` has shape ``(T, M)``; ``regressor_samples[k]`` has
    shape ``(T, p_k, M)``.
    """

    design: SimDesign
    target_samples: np.ndarray
    regressor_samples: tuple[np.ndarray, ...]

    @property
    def times(self) -> tuple[Fraction, ...]:
        return tuple(self.design.target_time(t) for t in range(1, self.design.T + 1))

    def training_set(self, grid: Grid | None = None, periods: slice = slice(None)) -> TrainingSet:
        """KDE every sample on ``grid`` and align targets with their lags."""
        d = self.design
        grid = grid or d.grid()
        ys = self.target_samples[periods]
        targets = kde_heights(ys, grid, bandwidth_rows(ys))
        lags = []
        for x in self.regressor_samples:
            x = x[periods]
            flat = x.reshape(-1, x.shape[-1])
            lags.append(kde_heights(flat, grid, bandwidth_rows(flat)).reshape(x.shape[0], x.shape[1], -1))
        spec = d.model_spec()
        return TrainingSet(grid, spec.regressors, self.times[periods], targets, tuple(lags))

    def regressor_time(self, k: int, t: int, i: int) -> Fraction:
        r = self.design.regressors[k]
        return self.design.target_time(t) - self.design.h - Fraction(i, r.m)


def exact_training_set(design: SimDesign, grid: Grid | None = None) -> TrainingSet:
    """Training set built from the true densities, with no sampling noise."""
    grid = grid or design.grid()
    periods = np.arange(1, design.T + 1)
    targets = _target_heights(design, periods, grid.points)
    lags = []
    for k, r in enumerate(design.regressors):
        z = (grid.points[None, None, :] - design.lag_means(k)[:, :, None]) / r.sd
        lags.append(np.exp(-0.5 * z * z) / (r.sd * _SQRT_2PI))
    spec = design.model_spec()
    return TrainingSet(grid, spec.regressors, tuple(design.target_time(t) for t in periods), targets, tuple(lags))


def exact_series(design: SimDesign, grid: Grid | None = None) -> tuple[dict, dict]:
    """True target densities and regressor series keyed by exact time."""
    grid = grid or design.grid()
    ts = exact_training_set(design, grid)
    targets = {t: DensityGrid(grid, f) for t, f in zip(ts.times, ts.targets)}
    series = {}
    for k, (sid, r) in enumerate(zip(design.series_ids, design.regressors)):
        entries = {}
        for row, t in enumerate(range(1, design.T + 1)):
            for i in range(1, r.p + 1):
                key = design.target_time(t) - design.h - Fraction(i, r.m)
                entries[key] = DensityGrid(grid, ts.lags[k][row, i - 1])
        series[sid] = MixedSeries(r.m, entries)
    return targets, series


def simulate_data(design: SimDesign, rng: np.random.Generator) -> SimData:
    """Draw one replication's raw samples."""
    coarse = design.grid()
    fine = Grid(coarse.lo, coarse.hi, design.fine_points)
    periods = np.arange(1, design.T + 1)
    heights = _target_heights(design, periods, fine.points)
    targets = np.empty((design.T, design.M))
    for row in range(design.T):
        targets[row] = sample_accept_reject(DensityGrid(fine, heights[row], check_mass=False), design.M, rng)
    regs = []
    for k, r in enumerate(design.regressors):
        mu = design.lag_means(k)
        regs.append(rng.normal(mu[:, :, None], r.sd, size=(design.T, r.p, design.M)))
    return SimData(design, targets, tuple(regs))


def replication_rng(design: SimDesign, index: int) -> np.random.Generator:
    """Independent stream for replication ``index``, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(design.seed, spawn_key=(index,)))


def estimate_params(design: SimDesign, model) -> np.ndarray:
    vals = [] if design.K == 1 else list(model.a)
    for th in model.theta:
        vals += list(th)
    return np.array(vals)


@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    """Bias, SD and RMSE of each parameter over the successful replications.

    SD and RMSE use divisor ``R``, so ``rmse**2 == bias**2 + sd**2``.
    """

    design: SimDesign
    names: tuple[str, ...]
    truth: np.ndarray
    estimates: np.ndarray
    failures: tuple[str, ...] = ()
    objectives: np.ndarray = field(default_factory=lambda: np.zeros(0))
    monotone: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def R_effective(self) -> int:
        return self.estimates.shape[0]

    @property
    def bias(self) -> np.ndarray:
        return self.estimates.mean(axis=0) - self.truth

    @property
    def sd(self) -> np.ndarray:
        return self.estimates.std(axis=0)

    @property
    def rmse(self) -> np.ndarray:
        return np.sqrt(np.mean((self.estimates - self.truth) ** 2, axis=0))

    def stat(self, name: str) -> dict:
        j = self.names.index(name)
        return {"bias": float(self.bias[j]), "sd": float(self.sd[j]), "rmse": float(self.rmse[j])}

    def rows(self) -> list[list]:
        d = self.design
        p = "/".join(str(r.p) for r in d.regressors)
        out = []
        for label, vals in (("Bias", self.bias), ("SD", self.sd), ("RMSE", self.rmse)):
            out.append([d.T, d.M, p, label] + [repr(float(v)) for v in vals])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "M", "p", "statistic", *self.names])
        w.writerows(self.rows())
        return buf.getvalue()


def run_study(design: SimDesign, fit_config: FitConfig | None = None,
              progress: Callable[[int, int], None] | None = None) -> MonteCarloReport:
    """Run ``design.R`` independent replications and summarize the estimates."""
    fit_config = fit_config or FitConfig()
    spec = design.model_spec()
    grid = design.grid()
    estimates, objectives, failures, monotone = [], [], [], []
    train = slice(0, design.T - design.holdout)
    for rep in range(design.R):
        rng = replication_rng(design, rep)
        try:
            data = simulate_data(design, rng).training_set(grid, train)
            model = fit(spec, data, fit_config)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("replication %d failed: %s", rep, exc)
            failures.append(f"{rep}: {exc}")
            continue
        estimates.append(estimate_params(design, model))
        objectives.append(model.diagnostics.objective)
        monotone.append(bool(np.all(np.diff(model.diagnostics.trace) <= 0)))
        if progress is not None:
            progress(rep + 1, design.R)
    est = np.array(estimates).reshape(len(estimates), len(design.param_names()))
    return MonteCarloReport(design, design.param_names(), design.true_params(), est,
                            tuple(failures), np.array(objectives), np.array(monotone, dtype=bool))


def _kde_rows(x: np.ndarray, grid: Grid) -> np.ndarray:
    flat = x.reshape(-1, x.shape[-1])
    return kde_heights(flat, grid, bandwidth_rows(flat)).reshape(*x.shape[:-1], grid.n_points)


def signal_noise_data(seed: int, T: int = 100, M: int = 200, p: int = 3,
                      a_signal: float = 0.8, theta: float = -0.05) -> tuple[ModelSpec, TrainingSet]:
    """Two-regressor training set where only the first regressor carries signal.

    The target mixes, with weight ``a_signal``, the Almon-weighted lags of
    regressor ``g1`` (the univariate lag law) and, with the remaining weight,
    a fixed N(1, 1) background that no regressor sees. Regressor ``g2`` has
    lag means drawn uniformly from [-1, 4] independently of everything else.
    """
    rng = np.random.default_rng(seed)
    grid = Grid(-4.0, 7.0, 30)
    t = np.arange(1, T + 1)
    mu1 = 0.01 * t[:, None] + np.arange(1, p + 1)[None, :] / 3.0
    mu2 = rng.uniform(-1.0, 4.0, (T, p))
    b = almon.weights(almon.AlmonSpec(1, p), [theta])
    comp = rng.choice(p, size=(T, M), p=b)
    signal = rng.normal(np.take_along_axis(mu1, comp, axis=1), 1.0)
    background = rng.normal(1.0, 1.0, (T, M))
    y = np.where(rng.uniform(size=(T, M)) < a_signal, signal, background)
    x1 = rng.normal(mu1[..., None], 1.0, (T, p, M))
    x2 = rng.normal(mu2[..., None], 1.0, (T, p, M))
    h = Fraction(1, 3)
    spec = ModelSpec((RegressorSpec("g1", 3, p, h, 1), RegressorSpec("g2", 3, p, h, 1)))
    times = tuple(Fraction(int(x)) for x in t)
    return spec, TrainingSet(grid, spec.regressors, times, _kde_rows(y, grid), (_kde_rows(x1, grid), _kde_rows(x2, grid)))


def lag_order_data(seed: int, T: int = 100, M: int = 500, p: int = 12, theta: float = -0.1,
                   m: int = 3, max_lag: int = 18, n_points: int = 30) -> tuple[dict, MixedSeries]:
    """Target densities and one regressor series for lag-order experiments.

    The regressor at time ``tau`` (a multiple of ``1/m``) is N(mu(tau), 1)
    with ``mu(tau) = 1.5 sin(2 pi tau / 2.3)``, so neighbouring lags sit at
    distinct locations. The target at integer ``t`` is the Almon mixture of
    its ``p`` lags with ``h = 1/m``. The regressor series reaches back far
    enough for every lag order up to ``max_lag``. Both are KDE'd from ``M``
    draws each.
    """
    rng = np.random.default_rng(seed)
    first = -(-(max_lag + 1) // m) + 1
    targets_t = np.arange(first, first + T)
    taus = np.arange((first - 1) * m - max_lag, (first + T) * m) / m
    mu = 1.5 * np.sin(2.0 * np.pi * taus / 2.3)
    grid = Grid(-5.5, 5.5, n_points)
    reg = _kde_rows(rng.normal(mu[:, None], 1.0, (taus.size, M)), grid)
    lookup = {Fraction(int(k), m): row for k, row in zip(np.rint(taus * m), reg)}
    series = MixedSeries(m, {key: DensityGrid(grid, row, check_mass=False) for key, row in lookup.items()})
    b = almon.weights(almon.AlmonSpec(1, p), [theta])
    pos = {Fraction(int(k), m): j for j, k in enumerate(np.rint(taus * m))}
    h = Fraction(1, m)
    lag_mu = np.array([[mu[pos[Fraction(int(t)) - h - Fraction(i, m)]] for i in range(1, p + 1)] for t in targets_t])
    comp = rng.choice(p, size=(T, M), p=b)
    y = rng.normal(np.take_along_axis(lag_mu, comp, axis=1), 1.0)
    heights = _kde_rows(y, grid)
    targets = {Fraction(int(t)): DensityGrid(grid, f, check_mass=False) for t, f in zip(targets_t, heights)}
    return targets, series
