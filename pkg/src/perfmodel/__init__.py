"""Generic performance model for distributed deep-learning iteration times.

Time per iteration is modelled as a sum of power-law terms in the intrinsic
hyperparameters, scaled by a product of powers of the extrinsic (scaling)
parameters, plus a constant. Fitting uses bounded differential evolution on
the mean absolute error, optionally with an L1/L2 penalty.
"""

from perfmodel.fitting import (
    FitConfig,
    FitResult,
    RegMode,
    cost_mae,
    cost_regularized,
    fit,
    lambda_sweep,
)
from perfmodel.metrics import MetricsReport, mape, mse, r2, rmse
from perfmodel.model import Bounds, ParamVector, default_bounds, evaluate, flatten, unflatten
from perfmodel.optimizer import DeConfig, DeResult, minimize, minimize_multi
from perfmodel.schema import (
    Dataset,
    ParamSchema,
    TrialRecord,
    aggregate_repetitions,
    default_schema,
    load_dataset,
    save_dataset,
    split,
)

__all__ = [
    "Bounds", "Dataset", "DeConfig", "DeResult", "FitConfig", "FitResult", "MetricsReport",
    "ParamSchema", "ParamVector", "RegMode", "TrialRecord", "aggregate_repetitions",
    "cost_mae", "cost_regularized", "default_bounds", "default_schema", "evaluate", "fit",
    "flatten", "lambda_sweep", "load_dataset", "mape", "minimize", "minimize_multi", "mse",
    "r2", "rmse", "save_dataset", "split", "unflatten",
]
