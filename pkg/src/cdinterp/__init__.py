"""Convex displacement interpolation of snapshots through Gaussian transport maps."""

from .errors import CdiError, ConfigError, NumericalError
from .fields import Extension, FieldFunction, Grid, StructuredField, l2_error, load_snapshot, save_snapshot
from .gaussian_ot import (
    AffineTransportMap,
    Gaussian,
    displacement_gaussian,
    eval_forward,
    eval_inverse,
    ot_map,
    wasserstein2,
)
from .interpolation import (
    CdiOperator,
    cdi_eval,
    convex_eval,
    displacement_eval,
    lagrangian_eval,
    learn_rescaling,
    project_s,
    project_s_convex,
)

__version__ = "0.1.0"

__all__ = [
    "CdiError",
    "ConfigError",
    "NumericalError",
    "Grid",
    "Extension",
    "FieldFunction",
    "StructuredField",
    "l2_error",
    "load_snapshot",
    "save_snapshot",
    "Gaussian",
    "AffineTransportMap",
    "ot_map",
    "eval_forward",
    "eval_inverse",
    "displacement_gaussian",
    "wasserstein2",
    "CdiOperator",
    "cdi_eval",
    "convex_eval",
    "lagrangian_eval",
    "displacement_eval",
    "project_s",
    "project_s_convex",
    "learn_rescaling",
]
