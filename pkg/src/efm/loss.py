"""Error-squares (ES) and percentage-error-squares (PES) losses and gradients."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import FeatureConfig, ParameterSet, predict, score_gradient
from .schema import Dataset


class LossKind(str, Enum):
    ES = "ES"
    PES = "PES"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown loss kind {value!r}; expected ES or PES") from None


@dataclass(frozen=True)
class RegularizerTable:
    """L2 strengths: ``lambda_v`` for all main effects, ``lambda_w`` for all factors."""

    lambda_v: float = 0.0
    lambda_w: float = 0.0

    def __post_init__(self):
        if self.lambda_v < 0 or self.lambda_w < 0:
            raise ValueError("regularization strengths must be non-negative")


NO_REGULARIZATION = RegularizerTable()


def _pair(forecasts, actuals, kind=None):
    f = np.asarray(forecasts, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if f.shape != a.shape:
        raise ValueError(f"length mismatch: {f.shape} forecasts vs {a.shape} actuals")
    if f.size == 0:
        raise ValueError("need at least one forecast/actual pair")
    if kind is LossKind.PES and np.any(a <= 0):
        raise ValueError("PES needs strictly positive actuals")
    return f, a


def loss(kind, forecasts, actuals) -> float:
    kind = LossKind.parse(kind)
    f, a = _pair(forecasts, actuals, kind)
    e = f - a
    if kind is LossKind.PES:
        e = e / a
    return 0.5 * float(e @ e)


def regularized_objective(kind, loss_value: float, params: ParameterSet, reg: RegularizerTable) -> float:
    if loss_value < 0:
        raise ValueError("loss value must be non-negative")
    return float(loss_value) + params.penalty(reg.lambda_v, reg.lambda_w)


def score_weights(kind, forecasts, actuals) -> np.ndarray:
    """Derivative of the loss with respect to each row's exponent."""
    kind = LossKind.parse(kind)
    f, a = _pair(forecasts, actuals, kind)
    w = (f - a) * f
    return w / (a * a) if kind is LossKind.PES else w


def common_term(kind, eta: float, forecast, actual):
    """Per-sample update factor: the score weight scaled by the learning rate."""
    w = eta * score_weights(kind, np.atleast_1d(forecast), np.atleast_1d(actual))
    return float(w[0]) if np.ndim(forecast) == 0 else w


def gradient(kind, params: ParameterSet, features: FeatureConfig, data: Dataset) -> ParameterSet:
    """Analytic gradient of the (unregularized) loss, laid out like ``params``."""
    if len(data) == 0:
        raise ValueError("gradient over an empty dataset")
    fc = predict(params, features, data)
    w = score_weights(kind, fc, data.responses)
    return score_gradient(params, features, data.levels, w)


def training_error(kind, forecasts, actuals) -> float:
    """MAE for ES, MAPE (as a fraction) for PES."""
    kind = LossKind.parse(kind)
    f, a = _pair(forecasts, actuals, kind)
    e = np.abs(f - a)
    if kind is LossKind.PES:
        e = e / a
    return float(e.mean())
