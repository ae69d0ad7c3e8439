"""Exponential Almon lag weights and their derivatives.

``b(i, theta) = exp(theta_1 i + ... + theta_q i**q) / sum_j exp(...)`` for
lags ``i = 1..p``. The weights are a softmax over polynomial scores, so
everything is computed from max-shifted scores and never overflows for
finite ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MAX_DEGREE = 4


@dataclass(frozen=True)
class AlmonSpec:
    q: int
    p: int

    def __post_init__(self):
        if not 1 <= self.q <= MAX_DEGREE:
            raise ValueError(f"Almon degree q must be in 1..{MAX_DEGREE}, got {self.q}")
        if self.p < 1:
            raise ValueError(f"lag count p must be >= 1, got {self.p}")

    def features(self) -> np.ndarray:
        """``(p, q)`` matrix of lag powers ``i**r`` (shared, read-only)."""
        return self._features

    @cached_property
    def _features(self) -> np.ndarray:
        lags = np.arange(1, self.p + 1, dtype=float)
        phi = lags[:, None] ** np.arange(1, self.q + 1)
        phi.flags.writeable = False
        return phi


def _theta(spec: AlmonSpec, theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float).reshape(-1)
    if th.size != spec.q:
        raise ValueError(f"theta has {th.size} entries, expected q={spec.q}")
    if not np.all(np.isfinite(th)):
        raise ValueError("theta must be finite")
    return th


def weights(spec: AlmonSpec, theta) -> np.ndarray:
    """Normalized lag weights, shape ``(p,)``."""
    z = spec.features() @ _theta(spec, theta)
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def weights_grad(spec: AlmonSpec, theta) -> np.ndarray:
    """Jacobian ``d b(i) / d theta_r``, shape ``(p, q)``.

    For a softmax, ``d b_i / d theta_r = b_i (i**r - E_b[i**r])``.
    """
    phi = spec.features()
    b = weights(spec, theta)
    centered = phi - b @ phi
    return b[:, None] * centered


def weights_hessian(spec: AlmonSpec, theta) -> np.ndarray:
    """Second derivatives ``d2 b(i) / d theta_r d theta_s``, shape ``(p, q, q)``."""
    phi = spec.features()
    b = weights(spec, theta)
    c = phi - b @ phi
    cov = (b[:, None] * c).T @ c
    return b[:, None, None] * (c[:, :, None] * c[:, None, :] - cov[None, :, :])
