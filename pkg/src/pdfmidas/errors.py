"""Exception and warning types raised across the package."""

from __future__ import annotations


class PdfMidasError(Exception):
    """Base class for all package errors."""


class DegenerateSample(PdfMidasError, ValueError):
    """Sample has zero spread, so the rule-of-thumb bandwidth is zero."""


class GridMismatch(PdfMidasError, ValueError):
    """Two densities (or a density and a model) live on different grids."""


class InvalidDensity(PdfMidasError, ValueError):
    """Density heights are negative, non-finite or far from unit mass."""


class MissingLag(PdfMidasError, KeyError):
    """A regressor observation needed for a target time is absent.

    ``t`` is the target time, ``lag`` the lag number ``i`` and ``key`` the
    missing time point ``t - h - i/m``.
    """

    def __init__(self, t, lag, key, series_id=None):
        self.t = t
        self.lag = lag
        self.key = key
        self.series_id = series_id
        where = f" in series {series_id!r}" if series_id is not None else ""
        super().__init__(f"target time {t}: lag {lag} needs time {key}{where}, which is missing")

    def __str__(self):
        return self.args[0]


class EmptyHistory(PdfMidasError, ValueError):
    """No observation strictly before the forecast time."""


class NotIdentifiable(PdfMidasError, ValueError):
    """Fewer residual equations than free parameters."""


class EnvelopeViolation(PdfMidasError, AssertionError):
    """Accept/reject envelope fell below the target density."""


class ConfigError(PdfMidasError, ValueError):
    """Configuration or input file does not match its schema."""


class GridTooNarrow(UserWarning):
    """KDE mass on the grid is below 0.99; the grid clips the kernel tails."""


class SingularDesign(UserWarning):
    """Normal matrix of a least-squares step is rank deficient."""


class LineSearchStall(UserWarning):
    """Backtracking could not find a step with sufficient decrease."""
