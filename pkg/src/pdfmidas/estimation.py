"""Least-squares estimation of PDF-MIDAS models on gridded densities.

The objective is the discretized squared L2 distance

    Q = ds * sum_t sum_i (f_t(s_i) - sum_k a_k sum_j b(j, theta_k) g_{k,t,j}(s_i))**2

For fixed Almon parameters it is a quadratic in ``a``; that step is solved
exactly over the probability simplex (MIDAS) or the ``sum = 1`` hyperplane
(UMIDAS). For fixed ``a`` the Almon parameters are updated by BFGS. The two
steps alternate until the relative decrease of ``Q`` stalls.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import almon
from .density import Grid
from .errors import GridMismatch, MissingLag, NotIdentifiable
from .model import (
    FitDiagnostics,
    FittedModel,
    MixedSeries,
    ModelSpec,
    RegressorSpec,
    as_time,
    lag_stack,
)

log = logging.getLogger(__name__)

MAX_SIMPLEX_DIM = 12


@dataclass(frozen=True)
class FitConfig:
    max_outer_iterations: int = 50
    outer_tol: float = 1e-8
    bfgs_max_iter: int = 200
    bfgs_grad_tol: float = 1e-7
    theta_init: tuple[float, ...] | None = None
    a_init: tuple[float, ...] | None = None
    seed: int = 0
    restarts: int = 3

    def __post_init__(self):
        if self.max_outer_iterations < 1 or self.bfgs_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.outer_tol <= 0 or self.bfgs_grad_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        for name in ("theta_init", "a_init"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(x) for x in np.ravel(v)))


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Targets and their aligned regressor lags on one grid.

    ``targets`` has shape ``(T, N)``; ``lags[k]`` has shape ``(T, p_k, N)``
    with lag ``i`` in row ``i - 1``. ``times`` are the usable target times.
    """

    grid: Grid
    regressors: tuple[RegressorSpec, ...]
    times: tuple[Fraction, ...]
    targets: np.ndarray
    lags: tuple[np.ndarray, ...]
    skipped: tuple[MissingLag, ...] = field(default=(), repr=False)

    def __post_init__(self):
        y = np.asarray(self.targets, dtype=float)
        T, N = y.shape
        if T == 0:
            raise ValueError("training set has no usable target times")
        if N != self.grid.n_points:
            raise GridMismatch(f"targets have {N} nodes, grid has {self.grid.n_points}")
        if len(self.times) != T:
            raise ValueError("one time index per target row is required")
        if len(self.lags) != len(self.regressors):
            raise ValueError("one lag array per regressor is required")
        lags = []
        for r, x in zip(self.regressors, self.lags):
            x = np.asarray(x, dtype=float)
            if x.shape != (T, r.p, N):
                raise ValueError(f"{r.series_id}: lag array shape {x.shape} != {(T, r.p, N)}")
            lags.append(x)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "lags", tuple(lags))
        object.__setattr__(self, "times", tuple(as_time(t) for t in self.times))
        object.__setattr__(self, "regressors", tuple(self.regressors))
        # (T*N, p_k) designs, rows ordered (t, node)
        object.__setattr__(self, "_designs", tuple(
            np.ascontiguousarray(x.transpose(0, 2, 1).reshape(T * N, -1)) for x in lags
        ))

    @property
    def usable_times(self) -> tuple[Fraction, ...]:
        return self.times

    @property
    def T(self) -> int:
        return self.targets.shape[0]

    @property
    def N(self) -> int:
        return self.targets.shape[1]

    @property
    def y(self) -> np.ndarray:
        return self.targets.reshape(-1)

    def design(self, k: int) -> np.ndarray:
        return self._designs[k]

    def factor(self) -> np.ndarray:
        """Triangular factor ``R`` of ``[X_1 ... X_K y]``, computed once and cached.

        ``|| y - X beta ||`` equals ``|| R @ [beta; -1] ||``, so every loss
        evaluation works on ``P + 1`` rows instead of ``T * N``, without the
        cancellation a Gram-matrix shortcut would suffer near a perfect fit.
        """
        r = self.__dict__.get("_factor")
        if r is None:
            r = np.linalg.qr(np.column_stack([*self._designs, self.y]), mode="r")
            object.__setattr__(self, "_factor", r)
        return r

    def with_targets(self, targets: np.ndarray) -> "TrainingSet":
        return TrainingSet(self.grid, self.regressors, self.times, targets, self.lags, self.skipped)

    def subset(self, times: Sequence) -> "TrainingSet":
        pos = {t: i for i, t in enumerate(self.times)}
        idx = [pos[as_time(t)] for t in times]
        return TrainingSet(self.grid, self.regressors, tuple(self.times[i] for i in idx),
                           self.targets[idx], tuple(x[idx] for x in self.lags), self.skipped)


def build_training_set(spec: ModelSpec, targets: Mapping, regressors: Mapping[str, MixedSeries],
                       times: Sequence | None = None) -> TrainingSet:
    """Align target densities with their regressor lags.

    Target times whose lags cannot all be resolved are skipped and kept in
    ``skipped``; if none survive, the first ``MissingLag`` is raised with the
    full list attached as ``.skipped``.
    """
    tmap = {as_time(k): v for k, v in targets.items()}
    wanted = sorted(tmap) if times is None else [as_time(t) for t in times]
    if not wanted:
        raise ValueError("no target densities supplied")
    grid = tmap[wanted[0]].grid
    used, rows, stacks, skipped = [], [], [[] for _ in spec.regressors], []
    for t in wanted:
        f = tmap[t]
        if f.grid != grid:
            raise GridMismatch(f"target at {t} lives on a different grid")
        try:
            per = []
            for r in spec.regressors:
                if r.series_id not in regressors:
                    raise KeyError(f"no data for regressor {r.series_id!r}")
                series = regressors[r.series_id]
                if series.grid is not None and series.grid != grid:
                    raise GridMismatch(f"{r.series_id} lives on a different grid than the targets")
                per.append(lag_stack(r, series, t))
        except MissingLag as exc:
            skipped.append(exc)
            continue
        used.append(t)
        rows.append(f.values)
        for s, x in zip(stacks, per):
            s.append(x)
    if not used:
        err = skipped[0]
        err.skipped = tuple(skipped)
        raise err
    lags = tuple(np.stack(s) for s in stacks)
    return TrainingSet(grid, spec.regressors, tuple(used), np.stack(rows), lags, tuple(skipped))


# ---------------------------------------------------------------------------
# objective and gradient


class _Layout:
    """Maps a flat vector of all Almon parameters onto the regressors."""

    def __init__(self, spec: ModelSpec, data: TrainingSet):
        if [(r.series_id, r.p) for r in spec.regressors] != [(r.series_id, r.p) for r in data.regressors]:
            raise ValueError("model spec and training set disagree on regressors or lag counts")
        self.spec = spec
        self.data = data
        self.almon = [r.almon for r in spec.regressors]
        self.slices = []
        start = 0
        for a in self.almon:
            if a is None:
                self.slices.append(None)
            else:
                self.slices.append(slice(start, start + a.q))
                start += a.q
        self.n_theta = start
        R = data.factor()
        self.target = R[:, -1]
        edges = np.cumsum([0] + [r.p for r in spec.regressors])
        self.blocks = [R[:, lo:hi] for lo, hi in zip(edges[:-1], edges[1:])]
        scale = np.ones(start)
        for a, sl in zip(self.almon, self.slices):
            if a is not None:
                scale[sl] = float(a.p) ** np.arange(1, a.q + 1)
        # theta_r = u_r / p**r puts every search coordinate on the scale of (i/p)**r
        self.scale = scale

    def split(self, flat) -> list:
        flat = np.asarray(flat, dtype=float)
        return [None if sl is None else flat[sl] for sl in self.slices]

    def join(self, theta: Sequence) -> np.ndarray:
        out = np.zeros(self.n_theta)
        for sl, t in zip(self.slices, theta):
            if sl is not None:
                out[sl] = np.asarray(t, dtype=float).reshape(-1)
        return out

    def lag_weights(self, flat) -> list[np.ndarray]:
        return [np.ones(1) if a is None else almon.weights(a, flat[sl])
                for a, sl in zip(self.almon, self.slices)]

    def columns(self, flat) -> np.ndarray:
        """Compressed design: column ``k`` is the Almon-weighted lag sum of regressor ``k``."""
        w = self.lag_weights(flat)
        return np.column_stack([X @ wk for X, wk in zip(self.blocks, w)])

    def residual(self, flat, a) -> np.ndarray:
        """Compressed residual; its squared norm is the full residual sum of squares."""
        return self.target - self.columns(flat) @ np.asarray(a, dtype=float)

    def value(self, flat, a) -> float:
        r = self.residual(flat, a)
        return float(r @ r) * self.data.grid.spacing

    def value_and_grad(self, flat, a) -> tuple[float, np.ndarray]:
        a = np.asarray(a, dtype=float)
        r = self.residual(flat, a)
        ds = self.data.grid.spacing
        grad = np.zeros(self.n_theta)
        for k, (spec_k, sl) in enumerate(zip(self.almon, self.slices)):
            if spec_k is None or a[k] == 0.0:
                continue
            jac = almon.weights_grad(spec_k, flat[sl])
            grad[sl] = -2.0 * ds * a[k] * (jac.T @ (self.blocks[k].T @ r))
        return float(r @ r) * ds, grad


def objective(spec: ModelSpec, data: TrainingSet, theta: Sequence, a) -> float:
    """Discretized L2 loss of a MIDAS parameter set; ``theta`` has one entry per regressor."""
    lay = _Layout(spec, data)
    return lay.value(lay.join(theta), a)


def objective_grad(spec: ModelSpec, data: TrainingSet, theta: Sequence, a) -> list:
    """Gradient of the loss with respect to each regressor's Almon parameters."""
    lay = _Layout(spec, data)
    _, g = lay.value_and_grad(lay.join(theta), a)
    return lay.split(g)


def model_objective(model: FittedModel, data: TrainingSet) -> float:
    """Loss of any fitted MIDAS or UMIDAS model on ``data``."""
    resid = data.targets - fitted_values(model, data)
    return float(np.sum(resid * resid)) * data.grid.spacing


def fitted_values(model: FittedModel, data: TrainingSet) -> np.ndarray:
    """In-sample forecasts, shape ``(T, N)``."""
    out = np.zeros_like(data.targets)
    for coef, x in zip(model.lag_coefficients(), data.lags):
        out += np.einsum("p,tpn->tn", coef, x)
    return out


# ---------------------------------------------------------------------------
# combination weights


class QPSolution(NamedTuple):
    x: np.ndarray
    value: float
    singular: bool


def _kkt(H: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, bool]:
    """Minimize ``x'Hx - 2g'x`` subject to ``sum(x) = 1``; min-norm solution if singular."""
    n = g.size
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = 2.0 * H
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.append(2.0 * g, 1.0)
    sol, _, rank, _ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:n], rank < n + 1


def simplex_qp(H: np.ndarray, g: np.ndarray) -> QPSolution:
    """Minimize ``x'Hx - 2g'x`` over the probability simplex.

    Every nonempty support set is tried: the equality-constrained minimizer
    on each face is kept if it is nonnegative, and the best feasible one
    wins. Exact for a positive semidefinite ``H``.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    K = g.size
    if K == 1:
        return QPSolution(np.ones(1), float(H[0, 0] - 2 * g[0]), False)
    if K > MAX_SIMPLEX_DIM:
        raise ValueError(f"simplex QP enumerates faces and supports at most {MAX_SIMPLEX_DIM} weights")
    best = None
    scale = max(1.0, float(np.abs(H).max()))
    for size in range(1, K + 1):
        for support in itertools.combinations(range(K), size):
            idx = list(support)
            xs, singular = _kkt(H[np.ix_(idx, idx)], g[idx])
            if xs.min() < -1e-10:
                continue
            xs = np.clip(xs, 0.0, None)
            xs /= xs.sum()
            x = np.zeros(K)
            x[idx] = xs
            val = float(x @ H @ x - 2.0 * g @ x)
            if best is None or val < best.value - 1e-14 * scale:
                best = QPSolution(x, val, singular)
    return best


def affine_lsq(H: np.ndarray, g: np.ndarray) -> QPSolution:
    """Minimize ``x'Hx - 2g'x`` subject only to ``sum(x) = 1``."""
    x, singular = _kkt(np.asarray(H, dtype=float), np.asarray(g, dtype=float))
    x = x + (1.0 - x.sum()) / x.size
    return QPSolution(x, float(x @ H @ x - 2.0 * g @ x), singular)


def solve_a(spec: ModelSpec, data: TrainingSet, theta: Sequence | None = None,
            kind: str = "simplex") -> QPSolution:
    """Best combination weights for fixed Almon parameters.

    ``kind="simplex"`` constrains the weights to ``a >= 0, sum(a) = 1``.
    ``kind="affine"`` drops the sign constraint; with ``theta=None`` it
    solves the unrestricted-lag (UMIDAS) problem over every individual lag.
    """
    lay = _Layout(spec, data)
    if kind == "affine" and theta is None:
        Z = np.column_stack(lay.blocks)
    else:
        Z = lay.columns(lay.join(theta if theta is not None else [None] * spec.K))
    H = Z.T @ Z
    g = Z.T @ lay.target
    if kind == "simplex":
        return simplex_qp(H, g)
    if kind == "affine":
        return affine_lsq(H, g)
    raise ValueError(f"unknown constraint kind {kind!r}")


# ---------------------------------------------------------------------------
# Almon parameters


class BFGSResult(NamedTuple):
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    stalled: bool


def bfgs(fun, x0, max_iter: int = 200, gtol: float = 1e-7, grad_scale=None,
         c1: float = 1e-4, shrink: float = 0.5, max_backtracks: int = 60) -> BFGSResult:
    """BFGS with an Armijo backtracking line search.

    ``fun`` returns ``(value, gradient)``. Iteration stops when
    ``max|grad * grad_scale| <= gtol``. The inverse-Hessian update is skipped
    whenever the curvature ``s'y`` is not safely positive.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    scale = np.ones(n) if grad_scale is None else np.asarray(grad_scale, dtype=float)
    f, g = fun(x)
    H = np.eye(n)
    first = True
    stalled = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g * scale), initial=0.0) <= gtol:
            return BFGSResult(x, f, g, it - 1, True, False)
        d = -H @ g
        slope = float(g @ d)
        if slope >= 0:
            H = np.eye(n)
            d = -g
            slope = -float(g @ g)
        step = 1.0
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            if math.isfinite(f_new) and f_new <= f + c1 * step * slope:
                break
            step *= shrink
        else:
            stalled = True
            break
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if first:
                H = np.eye(n) * (sy / float(yv @ yv))
                first = False
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, yv)
            H = V @ H @ V.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
    converged = bool(np.max(np.abs(g * scale), initial=0.0) <= gtol)
    return BFGSResult(x, f, g, it, converged, stalled)


class ThetaSolution(NamedTuple):
    theta: list
    objective: float
    iterations: int
    converged: bool
    stalled: bool


def solve_theta(spec: ModelSpec, data: TrainingSet, a, config: FitConfig | None = None,
                theta0: Sequence | None = None) -> ThetaSolution:
    """Update all Almon parameters by BFGS with the combination weights held fixed."""
    config = config or FitConfig()
    lay = _Layout(spec, data)
    a = np.asarray(a, dtype=float)
    flat0 = lay.join(theta0) if theta0 is not None else np.zeros(lay.n_theta)
    if lay.n_theta == 0:
        return ThetaSolution(lay.split(flat0), lay.value(flat0, a), 0, True, False)

    def fun(u):
        val, grad = lay.value_and_grad(u / lay.scale, a)
        return val, grad / lay.scale

    res = bfgs(fun, flat0 * lay.scale, config.bfgs_max_iter, config.bfgs_grad_tol, grad_scale=lay.scale)
    return ThetaSolution(lay.split(res.x / lay.scale), res.fun, res.iterations, res.converged, res.stalled)


# ---------------------------------------------------------------------------
# full fit


def _check_identifiable(spec: ModelSpec, data: TrainingSet):
    equations = data.T * data.N
    if equations < spec.n_params:
        raise NotIdentifiable(f"{equations} residual equations for {spec.n_params} parameters")


def _fit_umidas(spec, data, config):
    sol = solve_a(spec, data, None, "affine")
    sums, start = [], 0
    for r in spec.regressors:
        sums.append(sol.x[start:start + r.p].sum())
        start += r.p
    a = np.array(sums)
    flags = ("singular_design",) if sol.singular else ()
    model = FittedModel(spec, data.grid, (None,) * spec.K, a, sol.x, None, config)
    q = model_objective(model, data)
    diag = FitDiagnostics(q, 1, True, (q,), flags)
    return replace(model, diagnostics=diag)


def _alternate(lay: _Layout, flat, a, config: FitConfig):
    """One start of the alternating scheme; returns (theta, a, Q, trace, iters, converged, flags)."""
    spec, data = lay.spec, lay.data
    q = lay.value(flat, a)
    trace = [q]
    flags = set()
    converged = False
    it = 0
    for it in range(1, config.max_outer_iterations + 1):
        q_prev = q
        qp = simplex_qp(*_normal_eq(lay, flat))
        if qp.singular:
            flags.add("singular_design")
        q_a = lay.value(flat, qp.x)
        if q_a <= q:
            a, q = qp.x, q_a
        if lay.n_theta:
            sol = solve_theta(spec, data, a, config, lay.split(flat))
            if sol.stalled:
                flags.add("line_search_stall")
            if sol.objective <= q:
                flat, q = lay.join(sol.theta), sol.objective
        trace.append(q)
        if q <= 0.0 or (q_prev - q) <= config.outer_tol * q_prev or lay.n_theta == 0:
            converged = True
            break
    if lay.n_theta and spec.K > 1 and q > 0.0:
        flat, a, q, polished = _polish(lay, flat, a, q, config)
        if polished is not None:
            trace.append(q)
            converged = converged or polished
    return flat, a, q, trace, it, converged, flags


def _polish(lay: _Layout, flat, a, q, config: FitConfig):
    """BFGS on the profiled loss ``min_a Q(theta, a)`` over the simplex.

    Alternating updates crawl along valleys where ``a`` and ``theta`` trade
    off against each other. Profiling ``a`` out removes that coupling; since
    the simplex does not depend on ``theta``, the profiled gradient is the
    partial gradient at the optimal ``a``. The result is kept only if it
    lowers the loss; returns ``(flat, a, q, converged or None)``.
    """

    def fun(u):
        x = u / lay.scale
        w = simplex_qp(*_normal_eq(lay, x)).x
        val, grad = lay.value_and_grad(x, w)
        return val, grad / lay.scale

    res = bfgs(fun, flat * lay.scale, config.bfgs_max_iter, config.bfgs_grad_tol, grad_scale=lay.scale)
    cand = res.x / lay.scale
    a_new = simplex_qp(*_normal_eq(lay, cand)).x
    q_new = lay.value(cand, a_new)
    if q_new < q:
        return cand, a_new, q_new, res.converged
    return flat, a, q, None


def _normal_eq(lay: _Layout, flat):
    Z = lay.columns(flat)
    return Z.T @ Z, Z.T @ lay.target


def fit(spec: ModelSpec, data: TrainingSet, config: FitConfig | None = None) -> FittedModel:
    """Estimate a MIDAS or UMIDAS model by minimizing the discretized L2 loss.

    MIDAS fits alternate an exact simplex QP for the combination weights with
    BFGS on the Almon parameters, starting from ``config.theta_init`` (zeros
    by default) and from ``config.restarts`` random points in
    ``[-0.5, 0.5]^q``; the start with the lowest loss is kept.
    """
    config = config or FitConfig()
    if spec.kind == "ave":
        return FittedModel(spec, data.grid, config=config)
    _check_identifiable(spec, data)
    if spec.kind == "umidas":
        return _fit_umidas(spec, data, config)

    lay = _Layout(spec, data)
    K = spec.K
    a0 = np.full(K, 1.0 / K) if config.a_init is None else np.asarray(config.a_init, dtype=float)
    if a0.size != K or np.any(a0 < 0) or abs(a0.sum() - 1.0) > 1e-10:
        raise ValueError("a_init must be K nonnegative weights summing to 1")
    if config.theta_init is None:
        starts = [np.zeros(lay.n_theta)]
    else:
        starts = [np.asarray(config.theta_init, dtype=float)]
        if starts[0].size != lay.n_theta:
            raise ValueError(f"theta_init needs {lay.n_theta} values")
    if lay.n_theta:
        rng = np.random.default_rng(config.seed)
        starts += [rng.uniform(-0.5, 0.5, lay.n_theta) for _ in range(config.restarts)]

    best = None
    for i, start in enumerate(starts):
        out = _alternate(lay, start, a0, config)
        log.debug("start %d: Q=%.6g after %d outer iterations", i, out[2], out[4])
        if best is None or out[2] < best[1][2]:
            best = (i, out)
    i, (flat, a, q, trace, iters, converged, flags) = best
    if not converged:
        flags = flags | {"non_convergence"}
    diag = FitDiagnostics(q, iters, converged, tuple(trace), tuple(sorted(flags)), i)
    return FittedModel(spec, data.grid, tuple(lay.split(flat)), a, None, diag, config)


# ---------------------------------------------------------------------------
# lag order selection


class AICPoint(NamedTuple):
    p: int
    aic: float
    objective: float
    n_params: int
    T: int
    status: str


class AICResult(NamedTuple):
    chosen_p: int
    curve: list[AICPoint]
    models: dict


def aic(objective_value: float, n_params: int, T: int) -> float:
    """``2K + T log(Q / T)`` with ``Q`` the discretized squared-error loss."""
    return 2.0 * n_params + T * math.log(max(objective_value, 1e-300) / T)


def aic_select(spec: ModelSpec, targets: Mapping, regressors: Mapping[str, MixedSeries],
               p_candidates: Sequence[int], config: FitConfig | None = None,
               series_ids: Sequence[str] | None = None) -> AICResult:
    """Choose the lag order of the Almon regressors by AIC.

    Every candidate is fitted on the same target times (those usable under
    every candidate) so the criteria are comparable. Candidates whose fit
    fails are reported with a non-``ok`` status and skipped. Ties go to the
    smaller ``p``.
    """
    config = config or FitConfig()
    cands = sorted(set(int(p) for p in p_candidates))
    if not cands:
        raise ValueError("no lag orders to compare")
    built, curve = {}, []
    for p in cands:
        sp = spec.with_lags(p, series_ids)
        try:
            built[p] = (sp, build_training_set(sp, targets, regressors))
        except MissingLag as exc:
            curve.append(AICPoint(p, math.nan, math.nan, sp.n_params, 0, f"missing_lag: {exc}"))
    if not built:
        raise ValueError("no candidate lag order leaves any usable target time")
    common = set.intersection(*(set(d.times) for _, d in built.values()))
    if not common:
        raise ValueError("candidate lag orders share no usable target time")
    common = sorted(common)
    models = {}
    for p, (sp, data) in built.items():
        data = data.subset(common)
        try:
            model = fit(sp, data, config)
        except (NotIdentifiable, ValueError, np.linalg.LinAlgError) as exc:
            curve.append(AICPoint(p, math.nan, math.nan, sp.n_params, data.T, f"failed: {exc}"))
            continue
        q = model.diagnostics.objective
        curve.append(AICPoint(p, aic(q, sp.n_params, data.T), q, sp.n_params, data.T, "ok"))
        models[p] = model
    curve.sort(key=lambda pt: pt.p)
    ok = [pt for pt in curve if pt.status == "ok"]
    if not ok:
        raise ValueError("every candidate lag order failed to fit")
    chosen = min(ok, key=lambda pt: (pt.aic, pt.p)).p
    return AICResult(chosen, curve, models)
