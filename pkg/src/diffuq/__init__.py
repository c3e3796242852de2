"""Posterior sampling for regression uncertainty.

Train a drift network so that simulating a simple SDE from the origin
lands on a target posterior, then read calibrated predictive intervals
off the resulting parameter samples. Classic baselines (MAP, ensembles,
SGLD, SVGD, mean-field VI, MC dropout) share the same sample-bank and
metrics pipeline so methods are directly comparable.
"""

from .autodiff import Tape, Var
from .baselines import (SampleBank, ensemble_fit, load_bank, map_fit,
                        mc_dropout_fit, mc_dropout_sample, mfvi_fit,
                        mfvi_sample, sgld_sample, svgd_sample)
from .config import ExperimentConfig, apply_overrides, load_config
from .data import Dataset, Standardizer, load_csv, standardize_splits, \
    synth_dataset
from .errors import (CheckpointError, ConfigError, DataError, DiffuqError,
                     DimensionError, NumericalError)
from .harness import emit_report, run_experiment, run_sweep, selftest
from .metrics import (CalibrationReport, coverage_curve, ece_mce, evaluate,
                      interval_bounds, mixture_cdf, mixture_quantile, nll,
                      predictive_grid)
from .nets import NetLayout, init_params, mlp_forward, param_count
from .optim import Adam, OptimizerConfig
from .preprocess import resample_uniform, savgol_derivative
from .regression import HeteroModel, preset
from .rng import normals, spawn_seeds, stream
from .sampler import (DriftNetwork, SdeConfig, TrainReport, load_checkpoint,
                      new_drift, sample, save_checkpoint, simulate, train)
from .targets import (LogDensity, PosteriorTarget, conjugate_linear_posterior,
                      diag_gaussian, full_gaussian, linear_regression_posterior,
                      neal_funnel, smiley_face)

__version__ = "0.1.0"

__all__ = [
    "Adam", "CalibrationReport", "CheckpointError", "ConfigError",
    "DataError", "Dataset", "DiffuqError", "DimensionError", "DriftNetwork",
    "ExperimentConfig", "HeteroModel", "LogDensity", "NetLayout",
    "NumericalError", "OptimizerConfig", "PosteriorTarget", "SampleBank",
    "SdeConfig", "Standardizer", "Tape", "TrainReport", "Var",
    "apply_overrides", "conjugate_linear_posterior", "coverage_curve",
    "diag_gaussian", "ece_mce", "emit_report", "ensemble_fit", "evaluate",
    "full_gaussian", "init_params", "interval_bounds",
    "linear_regression_posterior", "load_bank", "load_checkpoint",
    "load_config", "load_csv", "map_fit", "mc_dropout_fit",
    "mc_dropout_sample", "mfvi_fit", "mfvi_sample", "mixture_cdf",
    "mixture_quantile", "mlp_forward", "neal_funnel", "new_drift", "nll",
    "normals", "param_count", "predictive_grid", "preset", "resample_uniform",
    "run_experiment", "run_sweep", "sample", "save_checkpoint", "selftest",
    "sgld_sample", "simulate", "smiley_face", "spawn_seeds",
    "standardize_splits", "stream", "svgd_sample", "synth_dataset", "train",
    "__version__",
]
