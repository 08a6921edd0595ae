"""Exponential factorization machines for positive-valued responses.

Forecasts are ``exp`` of a factorization-machine score over categorical
attributes, trained under squared error (ES) or squared percentage error
(PES) with adaptive full-batch gradient descent, with greedy stepwise
feature selection on top.
"""

from .abgd import TrainConfig, TrainReport, train
from .errors import ConfigError, DataError, DivergenceError, EFMError
from .loss import LossKind, RegularizerTable
from .metrics import diagnostics, evaluate, response_distribution, verify_theorem1
from .model import FeatureConfig, ParameterSet, forecast, load_model, predict, save_model
from .pipeline import PipelineConfig, run_logfm, run_pipeline
from .schema import AttributeSchema, Dataset, SchemaSpec, build_dataset, load_csv, partition_kfold
from .selection import SelectionConfig, gfsfs

__version__ = "0.1.0"

__all__ = [
    "AttributeSchema",
    "ConfigError",
    "DataError",
    "Dataset",
    "DivergenceError",
    "EFMError",
    "FeatureConfig",
    "LossKind",
    "ParameterSet",
    "PipelineConfig",
    "RegularizerTable",
    "SchemaSpec",
    "SelectionConfig",
    "TrainConfig",
    "TrainReport",
    "build_dataset",
    "diagnostics",
    "evaluate",
    "forecast",
    "gfsfs",
    "load_csv",
    "load_model",
    "partition_kfold",
    "predict",
    "response_distribution",
    "run_logfm",
    "run_pipeline",
    "save_model",
    "train",
    "verify_theorem1",
]
