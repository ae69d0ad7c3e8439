"""Model specifications, lag alignment and forecasting for PDF-MIDAS.

Time points are exact rationals (``fractions.Fraction``): the target of
period ``t`` sits at ``t`` and the ``i``-th lag of a regressor sampled
``m`` times per period sits at ``t - h - i/m``. Exact keys keep lag lookup
free of float drift however long the series.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import almon
from .density import DensityGrid, Grid
from .errors import EmptyHistory, GridMismatch, MissingLag

MODEL_KINDS = ("midas", "umidas", "ave")


def as_time(value) -> Fraction:
    """Coerce ``int``, ``Fraction``, ``"num/den"`` strings or ``(num, den)`` pairs to a time index."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (tuple, list)) and len(value) == 2:
        num, den = value
        if int(den) <= 0:
            raise ValueError(f"time denominator must be positive, got {den}")
        return Fraction(int(num), int(den))
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        if not value.is_integer():
            raise TypeError(f"refusing to use non-integer float {value!r} as an exact time; pass a Fraction")
        return Fraction(int(value))
    raise TypeError(f"cannot interpret {value!r} as a time index")


@dataclass(frozen=True, eq=False)
class MixedSeries:
    """Densities observed ``m`` times per unit interval, keyed by exact time."""

    m: int
    entries: Mapping[Fraction, DensityGrid]

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"frequency m must be >= 1, got {self.m}")
        clean: dict[Fraction, DensityGrid] = {}
        grid = None
        for key, dens in self.entries.items():
            key = as_time(key)
            if (key * self.m).denominator != 1:
                raise ValueError(f"time {key} is not a multiple of 1/{self.m}")
            if grid is None:
                grid = dens.grid
            elif dens.grid != grid:
                raise GridMismatch(f"series mixes grids {grid} and {dens.grid}")
            clean[key] = dens
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    @property
    def grid(self) -> Grid | None:
        for dens in self.entries.values():
            return dens.grid
        return None

    @property
    def times(self) -> list[Fraction]:
        return list(self.entries)

    def __contains__(self, key) -> bool:
        return as_time(key) in self.entries

    def __getitem__(self, key) -> DensityGrid:
        return self.entries[as_time(key)]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class RegressorSpec:
    """Lag layout of one regressor.

    ``q`` is the Almon polynomial degree; ``q=None`` marks an unrestricted
    regressor, which under MIDAS is only allowed with a single lag (an annual
    regressor enters with weight one).
    """

    series_id: str
    m: int = 1
    p: int = 1
    h: Fraction = Fraction(0)
    q: int | None = 1

    def __post_init__(self):
        object.__setattr__(self, "h", as_time(self.h))
        if not self.series_id:
            raise ValueError("series_id must be nonempty")
        if self.m < 1 or self.p < 1:
            raise ValueError(f"{self.series_id}: need m >= 1 and p >= 1")
        if self.h < 0:
            raise ValueError(f"{self.series_id}: minimum interval h must be >= 0")
        if self.q is not None and not 1 <= self.q <= almon.MAX_DEGREE:
            raise ValueError(f"{self.series_id}: Almon degree must be in 1..{almon.MAX_DEGREE}")

    @property
    def almon(self) -> almon.AlmonSpec | None:
        return None if self.q is None else almon.AlmonSpec(self.q, self.p)

    def lag_times(self, t) -> list[Fraction]:
        t = as_time(t)
        return [t - self.h - Fraction(i, self.m) for i in range(1, self.p + 1)]

    def with_lags(self, p: int) -> "RegressorSpec":
        return RegressorSpec(self.series_id, self.m, p, self.h, self.q)


@dataclass(frozen=True)
class ModelSpec:
    regressors: tuple[RegressorSpec, ...] = ()
    kind: str = "midas"

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in MODEL_KINDS:
            raise ValueError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if kind == "ave":
            if self.regressors:
                raise ValueError("the AVE baseline takes no regressors")
            return
        if not self.regressors:
            raise ValueError(f"{kind} needs at least one regressor")
        ids = [r.series_id for r in self.regressors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate regressor ids in {ids}")
        if kind == "midas":
            for r in self.regressors:
                if r.q is None and r.p != 1:
                    raise ValueError(
                        f"{r.series_id}: unrestricted lag weights need kind='umidas' (or p=1)"
                    )

    @property
    def K(self) -> int:
        return len(self.regressors)

    @property
    def n_params(self) -> int:
        """Free parameters counted for AIC: Almon degrees plus one weight per regressor."""
        if self.kind == "ave":
            return 0
        if self.kind == "umidas":
            return sum(r.p for r in self.regressors)
        return sum(r.q or 0 for r in self.regressors) + self.K

    def with_lags(self, p: int, series_ids: Sequence[str] | None = None) -> "ModelSpec":
        def pick(r):
            return r.q is not None if series_ids is None else r.series_id in series_ids

        regs = tuple(r.with_lags(p) if pick(r) else r for r in self.regressors)
        return ModelSpec(regs, self.kind)


@dataclass(frozen=True)
class FitDiagnostics:
    objective: float
    iterations: int
    converged: bool
    trace: tuple[float, ...] = ()
    flags: tuple[str, ...] = ()
    best_start: int = 0


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Estimated parameters of a MIDAS, UMIDAS or AVE model.

    ``theta`` holds one Almon parameter vector per regressor (``None`` for
    unrestricted ones). ``a`` holds the combination weights; for UMIDAS it is
    the per-regressor sum of the free lag coefficients in ``coef``.
    """

    spec: ModelSpec
    grid: Grid
    theta: tuple = ()
    a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    coef: np.ndarray | None = None
    diagnostics: FitDiagnostics | None = None
    config: object = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        object.__setattr__(self, "a", a)
        spec = self.spec
        if spec.kind == "ave":
            return
        if a.size != spec.K:
            raise ValueError(f"expected {spec.K} combination weights, got {a.size}")
        if spec.kind == "midas":
            th = tuple(None if t is None else np.asarray(t, dtype=float).reshape(-1) for t in self.theta)
            if len(th) != spec.K:
                raise ValueError("need one theta entry per regressor")
            for r, t in zip(spec.regressors, th):
                if (r.q is None) != (t is None) or (t is not None and t.size != r.q):
                    raise ValueError(f"{r.series_id}: theta does not match q={r.q}")
            object.__setattr__(self, "theta", th)
            if np.any(a < -1e-12) or abs(a.sum() - 1.0) > 1e-10:
                raise ValueError(f"MIDAS weights must lie on the simplex, got {a}")
        else:
            c = np.asarray(self.coef, dtype=float).reshape(-1)
            if c.size != sum(r.p for r in spec.regressors):
                raise ValueError("UMIDAS coefficient count does not match the lag layout")
            if abs(c.sum() - 1.0) > 1e-10:
                raise ValueError(f"UMIDAS coefficients must sum to 1, got {c.sum()}")
            object.__setattr__(self, "coef", c)
            object.__setattr__(self, "theta", (None,) * spec.K)

    def lag_weights(self, k: int) -> np.ndarray:
        """Effective coefficient of each lag of regressor ``k``, before ``a_k``."""
        r = self.spec.regressors[k]
        if self.spec.kind == "umidas":
            start = sum(s.p for s in self.spec.regressors[:k])
            return self.coef[start:start + r.p]
        if r.q is None:
            return np.ones(1)
        return almon.weights(r.almon, self.theta[k])

    def lag_coefficients(self) -> list[np.ndarray]:
        """Total weight of every lag in the forecast, one array per regressor."""
        if self.spec.kind == "umidas":
            return [self.lag_weights(k) for k in range(self.spec.K)]
        return [self.a[k] * self.lag_weights(k) for k in range(self.spec.K)]


@dataclass(frozen=True, eq=False)
class Prediction:
    density: DensityGrid
    clipped: bool = False
    raw: np.ndarray | None = None


def resolve_lags(spec: RegressorSpec, series: MixedSeries, t) -> list[DensityGrid]:
    """Lagged densities ``g_{t-h-i/m}`` for ``i = 1..p``, ordered by increasing lag."""
    t = as_time(t)
    if series.m != spec.m:
        raise ValueError(f"{spec.series_id}: series has m={series.m}, spec expects m={spec.m}")
    out = []
    for i, key in enumerate(spec.lag_times(t), start=1):
        dens = series.entries.get(key)
        if dens is None:
            raise MissingLag(t, i, key, spec.series_id)
        out.append(dens)
    return out


def lag_stack(spec: RegressorSpec, series: MixedSeries, t) -> np.ndarray:
    """``(p, N)`` array of lagged heights."""
    return np.stack([d.values for d in resolve_lags(spec, series, t)])


def combine(model: FittedModel, stacks: Sequence[np.ndarray]) -> np.ndarray:
    """Forecast heights from per-regressor lag arrays of shape ``(..., p_k, N)``."""
    out = 0.0
    for coef, x in zip(model.lag_coefficients(), stacks):
        out = out + np.einsum("p,...pn->...n", coef, x)
    return np.asarray(out)


def _finish(values: np.ndarray, grid: Grid, check_mass: bool) -> Prediction:
    clipped = bool(np.any(values < 0))
    raw = values.copy()
    if clipped:
        values = np.clip(values, 0.0, None)
        mass = float(trapezoid(values, dx=grid.spacing))
        if mass <= 0:
            raise ValueError("forecast is nonpositive everywhere after clipping")
        values = values / mass
    return Prediction(DensityGrid(grid, values, check_mass=check_mass or clipped), clipped, raw)


def predict(model: FittedModel, regressor_data: Mapping[str, MixedSeries], t) -> Prediction:
    """Forecast the target density at time ``t``.

    MIDAS forecasts are convex combinations of the lagged densities. UMIDAS
    forecasts can dip below zero; they are clipped at zero, renormalized and
    reported with ``clipped=True``.
    """
    if model.spec.kind == "ave":
        raise ValueError("use predict_ave for the AVE baseline")
    stacks, check = [], True
    for r in model.spec.regressors:
        series = regressor_data[r.series_id]
        dens = resolve_lags(r, series, t)
        for d in dens:
            if d.grid != model.grid:
                raise GridMismatch(f"{r.series_id} lives on {d.grid}, model on {model.grid}")
            check = check and d.check_mass
        stacks.append(np.stack([d.values for d in dens]))
    return _finish(combine(model, stacks), model.grid, check)


def predict_ave(history: Mapping, t) -> DensityGrid:
    """Pointwise mean of every observed density strictly before ``t``."""
    t = as_time(t)
    past = [d for key, d in history.items() if as_time(key) < t]
    if not past:
        raise EmptyHistory(f"no observation before {t}")
    grid = past[0].grid
    for d in past:
        if d.grid != grid:
            raise GridMismatch("history mixes grids")
    mean = np.mean([d.values for d in past], axis=0)
    return DensityGrid(grid, mean, check_mass=all(d.check_mass for d in past))

