"""Adaptive batch gradient descent.

Every iteration uses the whole training set as one batch, updates all
parameters simultaneously from the pre-iteration values, and halves the
learning rate when the training error is already below a threshold but
went up.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DivergenceError
from .loss import NO_REGULARIZATION, LossKind, RegularizerTable
from .model import FeatureConfig, ParameterSet, linear_scores, score_gradient
from .schema import Dataset

DEFAULT_EPSILON = {LossKind.PES: 0.1, LossKind.ES: 1.0}


def resolve_epsilon(kind, override: float | None = None) -> float:
    if override is not None:
        return float(override)
    return DEFAULT_EPSILON[LossKind.parse(kind)]


@dataclass(frozen=True)
class TrainConfig:
    eta: float
    max_iterations: int
    reg: RegularizerTable = NO_REGULARIZATION
    epsilon: float | None = None
    init_sigma: float = 0.1
    seed: int = 0
    f: int = 2
    early_stop: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.init_sigma < 0:
            raise ConfigError("init_sigma must be non-negative")
        if self.f < 1:
            raise ConfigError("f must be >= 1")

    def unregularized(self) -> "TrainConfig":
        return replace(self, reg=NO_REGULARIZATION)


@dataclass
class TrainReport:
    final_params: ParameterSet
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)
    halvings: int = 0
    clamped: int = 0

    @property
    def training_errors(self) -> np.ndarray:
        return np.array([t[1] for t in self.trace])

    @property
    def objectives(self) -> np.ndarray:
        return np.array([t[2] for t in self.trace])

    @property
    def etas(self) -> np.ndarray:
        return np.array([t[3] for t in self.trace])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "training_error", "objective", "eta"])
            for it, te, obj, eta in self.trace:
                w.writerow([it, repr(te), repr(obj), repr(eta)])


def _exp_link(score):
    clipped = np.clip(score, -500.0, 500.0)
    return np.exp(clipped), int(np.count_nonzero(clipped != score))


def _identity_link(score):
    return score, 0


def descend(
    levels: np.ndarray,
    targets: np.ndarray,
    features: FeatureConfig,
    kind,
    cfg: TrainConfig,
    params: ParameterSet,
    link: str = "exp",
) -> TrainReport:
    """Run the adaptive descent loop from ``params`` (modified in place).

    With ``link="exp"`` predictions are ``exp(score)`` (the EFM); with
    ``link="identity"`` they are the raw score (plain FM on transformed
    targets). The loss derivative with respect to the score is then
    ``(p - y) * p`` or ``(p - y)`` respectively, divided by ``y**2`` for PES.
    """
    kind = LossKind.parse(kind)
    apply_link = _exp_link if link == "exp" else _identity_link
    eps = resolve_epsilon(kind, cfg.epsilon)
    lam_v, lam_w = cfg.reg.lambda_v, cfg.reg.lambda_w
    targets = np.asarray(targets, dtype=float)
    inv_sq = 1.0 / (targets * targets) if kind is LossKind.PES else None
    inv = 1.0 / np.abs(targets) if kind is LossKind.PES else None

    report = TrainReport(params)
    eta = float(cfg.eta)
    te_prev = math.inf
    pred, clamped = apply_link(linear_scores(params, features, levels))
    report.clamped += clamped

    for itr in range(1, cfg.max_iterations + 1):
        resid = pred - targets
        w = resid * pred if link == "exp" else resid
        if inv_sq is not None:
            w = w * inv_sq
        step = score_gradient(params, features, levels, eta * w)

        params.beta0 -= step.beta0
        for c in params.beta:
            params.beta[c] = params.beta[c] - step.beta[c] - eta * lam_v * params.beta[c]
        for c in params.mu:
            params.mu[c] = params.mu[c] - step.mu[c] - eta * lam_w * params.mu[c]

        pred, clamped = apply_link(linear_scores(params, features, levels))
        report.clamped += clamped
        err = pred - targets
        if inv is not None:
            err = err * inv
        objective = 0.5 * float(err @ err) + params.penalty(lam_v, lam_w)
        te = float(np.abs(err).mean())
        if not (math.isfinite(objective) and math.isfinite(te)):
            raise DivergenceError(itr, eta)
        report.trace.append((itr, te, objective, eta))

        if te < eps and te > te_prev:
            eta /= 2.0
            report.halvings += 1
        if cfg.early_stop and abs(te - te_prev) < 1e-12:
            break
        te_prev = te

    if report.clamped:
        warnings.warn(f"{report.clamped} forecast exponent(s) clamped during training", RuntimeWarning)
    return report


def train(
    data: Dataset,
    features: FeatureConfig,
    kind,
    cfg: TrainConfig,
    init: ParameterSet | None = None,
) -> TrainReport:
    """Fit EFM parameters for ``features`` on ``data``.

    Initialization follows the usual recipe: zero intercept and main effects,
    factor entries drawn from ``N(0, init_sigma)`` with ``cfg.seed``.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    features.validate(data.schema)
    if init is None:
        rng = np.random.default_rng(cfg.seed)
        params = ParameterSet.initialize(data.schema, features, cfg.f, cfg.init_sigma, rng)
    else:
        params = init.copy()
    return descend(data.levels, data.responses, features, kind, cfg, params, link="exp")
