"""Residual bootstrap significance tests for the combination weights.

For each usable target time the in-sample residuals
``e_t(s_i) = f_t(s_i) - fhat_t(s_i)`` are resampled with replacement across
the grid nodes of that same ``t``. A replicate target is the fitted density
plus the resampled residuals; the model is refit on it and the replicate
weights ``a^(b)`` are collected.

The default p-value is the exceedance frequency ``mean(a^(b) >= a_hat)``.
That count is taken against the bootstrap distribution centred at
``a_hat``, so it hovers near 1/2 for any well-estimated weight. The
``two_sided`` variant recentres the replicates at zero,
``r_b = a^(b) - a_hat``, and reports ``2 min(p, 1 - p)`` with
``p = mean(r_b >= a_hat)``, which is small when ``a_hat`` sits far from zero
relative to its bootstrap spread.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import FitConfig, TrainingSet, fit, fitted_values
from .errors import NotIdentifiable
from .model import FittedModel

log = logging.getLogger(__name__)

MIN_BOOTSTRAP = 100
FAILURE_FLAG_SHARE = 0.05


@dataclass(frozen=True)
class BootstrapConfig:
    n_bootstrap: int = 1000
    seed: int = 0
    two_sided: bool = False

    def __post_init__(self):
        if self.n_bootstrap < MIN_BOOTSTRAP:
            raise ValueError(f"n_bootstrap must be >= {MIN_BOOTSTRAP}, got {self.n_bootstrap}")


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Test outcome for one combination weight."""

    coefficient_id: str
    estimate: float
    replicates: np.ndarray
    p_value: float
    two_sided: bool = False
    n_failed: int = 0
    flags: tuple[str, ...] = field(default=())

    @property
    def n_effective(self) -> int:
        return int(self.replicates.size)


def bootstrap_p_value(estimate: float, replicates, two_sided: bool = False) -> float:
    """Exceedance p-value of ``estimate`` against its bootstrap replicates."""
    r = np.asarray(replicates, dtype=float)
    if r.size == 0:
        raise ValueError("no bootstrap replicates")
    if not two_sided:
        return float(np.mean(r >= estimate))
    p = float(np.mean(r - estimate >= estimate))
    return 2.0 * min(p, 1.0 - p)


def resample_residuals(residuals: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw each row's values with replacement from that row alone."""
    T, N = residuals.shape
    idx = rng.integers(0, N, size=(T, N))
    return np.take_along_axis(residuals, idx, axis=1)


def replicate_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def bootstrap_test(fitted: FittedModel, data: TrainingSet, config: BootstrapConfig | None = None,
                   fit_config: FitConfig | None = None) -> list[BootstrapResult]:
    """Bootstrap every combination weight of ``fitted``.

    Each replicate is refit with the model's own spec and with ``fit_config``
    (the config stored on ``fitted`` by default). Replicates whose fit fails
    are dropped; the p-values use the remaining ones and a
    ``replicate_failures`` flag is raised when more than 5% fail.
    """
    config = config or BootstrapConfig()
    if fitted.spec.kind == "ave":
        raise ValueError("the AVE baseline has no coefficients to test")
    diag = fitted.diagnostics
    if diag is not None and not diag.converged:
        warnings.warn("bootstrapping a fit that did not converge", RuntimeWarning, stacklevel=2)
    fit_config = fit_config or fitted.config or FitConfig()
    fhat = fitted_values(fitted, data)
    resid = data.targets - fhat

    B = config.n_bootstrap
    draws, failures = [], []
    for b, rng in enumerate(replicate_rngs(config.seed, B)):
        rep = data.with_targets(fhat + resample_residuals(resid, rng))
        try:
            draws.append(fit(fitted.spec, rep, fit_config).a)
        except (NotIdentifiable, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("bootstrap replicate %d failed: %s", b, exc)
            failures.append(b)
    if not draws:
        raise RuntimeError("every bootstrap replicate failed to fit")
    reps = np.array(draws)
    flags = ("replicate_failures",) if len(failures) > FAILURE_FLAG_SHARE * B else ()

    out = []
    for k, r in enumerate(fitted.spec.regressors):
        est = float(fitted.a[k])
        col = reps[:, k].copy()
        col.flags.writeable = False
        p = bootstrap_p_value(est, col, config.two_sided)
        out.append(BootstrapResult(r.series_id, est, col, p, config.two_sided, len(failures), flags))
    return out


def with_sidedness(results, two_sided: bool) -> list[BootstrapResult]:
    """Recompute p-values of existing results under the other convention."""
    return [replace(r, two_sided=two_sided, p_value=bootstrap_p_value(r.estimate, r.replicates, two_sided))
            for r in results]
