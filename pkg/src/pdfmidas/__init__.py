"""Density forecasts from mixed-frequency density regressors.

A low-frequency target density is predicted as a convex combination of
Almon-weighted lags of higher-frequency regressor densities, all tabulated
on a shared equidistant grid.
"""

from .density import DensityGrid, Grid, bandwidth, distance, kde, moments, mse, wasserstein1
from .errors import (
    ConfigError,
    EmptyHistory,
    GridMismatch,
    MissingLag,
    NotIdentifiable,
    PdfMidasError,
)
from .estimation import FitConfig, TrainingSet, aic_select, build_training_set, fit
from .inference import BootstrapConfig, bootstrap_test
from .model import FittedModel, MixedSeries, ModelSpec, RegressorSpec, predict, predict_ave
from .simulation import SimDesign, run_study

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "ConfigError",
    "DensityGrid",
    "EmptyHistory",
    "FitConfig",
    "FittedModel",
    "Grid",
    "GridMismatch",
    "MissingLag",
    "MixedSeries",
    "ModelSpec",
    "NotIdentifiable",
    "PdfMidasError",
    "RegressorSpec",
    "SimDesign",
    "TrainingSet",
    "aic_select",
    "bandwidth",
    "bootstrap_test",
    "build_training_set",
    "distance",
    "fit",
    "kde",
    "moments",
    "mse",
    "predict",
    "predict_ave",
    "run_study",
    "wasserstein1",
]
