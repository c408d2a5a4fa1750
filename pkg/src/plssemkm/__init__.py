"""Partial least squares path modelling with simultaneous K-means clustering."""

from .core import (
    DataMatrix,
    FitOptions,
    FittedModel,
    ModelState,
    NumericalError,
    fit_multistart,
    fit_once,
    fit_plain_pls,
    standardize,
    tandem_baseline,
)
from .metrics import FitReport, adjusted_rand_index, fit_report
from .model_spec import PathModelSpec, SpecError, load_model_spec, parse_model_spec, validate_spec
from .selection import KSelectionResult, select_k

__version__ = "0.1.0"

__all__ = [
    "DataMatrix",
    "FitOptions",
    "FitReport",
    "FittedModel",
    "KSelectionResult",
    "ModelState",
    "NumericalError",
    "PathModelSpec",
    "SpecError",
    "adjusted_rand_index",
    "fit_multistart",
    "fit_once",
    "fit_plain_pls",
    "fit_report",
    "load_model_spec",
    "parse_model_spec",
    "select_k",
    "standardize",
    "tandem_baseline",
    "validate_spec",
]
