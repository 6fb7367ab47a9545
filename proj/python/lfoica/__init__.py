"""Likelihood-free overcomplete ICA and its causal-discovery extensions."""

import json as _json

from . import _lfoica
from ._lfoica import (
    ConfigError,
    NumericalDivergence,
    aggregate,
    align,
    build_L,
    build_M0_M1,
    gaussian_kernel,
    gen_measurement_error,
    gen_oica,
    gen_var,
    joint_mmd2,
    least_squares_transition,
    load_timeseries_csv,
    matrix_power,
    measurement_mixing,
    median_bandwidth,
    mmd2,
    mse,
    normalize_first_column,
    prox_l1,
    subsample,
    train_aggregated,
    train_lfoica,
    train_measurement_error,
    train_subsampled,
)

__all__ = [
    "ConfigError",
    "NumericalDivergence",
    "aggregate",
    "align",
    "build_L",
    "build_M0_M1",
    "gaussian_kernel",
    "gen_measurement_error",
    "gen_oica",
    "gen_var",
    "joint_mmd2",
    "least_squares_transition",
    "load_timeseries_csv",
    "matrix_power",
    "measurement_mixing",
    "median_bandwidth",
    "mmd2",
    "mse",
    "normalize_first_column",
    "prox_l1",
    "run_experiment",
    "subsample",
    "train_aggregated",
    "train_lfoica",
    "train_measurement_error",
    "train_subsampled",
]


def run_experiment(config, threads=1):
    """Run an experiment from a config dict (dotted keys) or a path to a JSON config.

    Returns the results document as a dict.
    """
    if isinstance(config, dict):
        text = _lfoica._run_experiment_json(_json.dumps(config), threads)
    else:
        text = _lfoica._run_experiment_file(str(config), threads)
    return _json.loads(text)
