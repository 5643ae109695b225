"""Identifiable VAE blind source separation for spatio-temporal data."""

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    NumericError,
    StateError,
    auxiliary,
    krige,
    linear_unmixing_mcc,
    matern,
    mcc,
    predict,
    simulate,
    sweep_dims,
    train,
    uaic,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "NumericError",
    "StateError",
    "auxiliary",
    "krige",
    "linear_unmixing_mcc",
    "matern",
    "mcc",
    "predict",
    "simulate",
    "sweep_dims",
    "train",
    "uaic",
]
