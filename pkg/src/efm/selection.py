"""Greedy forward stepwise feature selection with k-fold cross-validation.

Search alternates between adding attributes (direction +1) and adding
interactions (direction -1). Candidates are ranked with closed-form
scores that refit one multiplicative weight per level (or per level pair)
on top of the current fitted values; the best few are cross-validated and
kept only when a one-sided paired t-test says the fold errors dropped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .abgd import TrainConfig, train
from .errors import ConfigError
from .loss import LossKind
from .model import FeatureConfig, predict
from .schema import Attribute, AttributeSchema, Dataset, KFoldPartition, partition_kfold

log = logging.getLogger(__name__)

ADD_ATTRIBUTES = 1
ADD_INTERACTIONS = -1


@dataclass(frozen=True)
class SelectionConfig:
    """Selection hyper-parameters.

    ``b`` and ``g`` are the attribute and interaction selection depths,
    ``lambda_A`` / ``lambda_I`` the per-level complexity penalties of the
    candidate scores. ``train`` is the inner trainer configuration; its
    regularization is ignored during selection.
    """

    train: TrainConfig
    b: int = 3
    g: int = 2
    lambda_A: float = 0.0
    lambda_I: float = 0.0
    k: int = 5
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.b < 1 or self.g < 1:
            raise ConfigError("selection depths b and g must be >= 1")
        if self.lambda_A < 0 or self.lambda_I < 0:
            raise ConfigError("complexity penalties must be non-negative")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")


@dataclass
class CvResult:
    errors: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    def __len__(self) -> int:
        return len(self.errors)


def _validation_error(kind: LossKind, forecasts, actuals) -> float:
    e = np.abs(forecasts - actuals)
    if kind is LossKind.PES:
        e = e / actuals
    return float(e.mean())


# -- null model ---------------------------------------------------------------


def null_model_level(kind, responses) -> float:
    """Constant forecast minimizing the loss: mean (ES) or sum(1/d)/sum(1/d^2) (PES)."""
    kind = LossKind.parse(kind)
    d = np.asarray(responses, dtype=float)
    if d.size == 0:
        raise ValueError("null model needs at least one response")
    if np.any(d <= 0):
        raise ValueError("responses must be positive")
    if kind is LossKind.ES:
        return float(d.mean())
    inv = 1.0 / d
    return float(inv.sum() / (inv @ inv))


def null_model_beta0(kind, responses) -> float:
    return float(np.log(null_model_level(kind, responses)))


def null_model_cv_errors(kind, partition: KFoldPartition, data: Dataset) -> CvResult:
    kind = LossKind.parse(kind)
    errors = []
    for i in range(partition.k):
        held = partition.fold_rows(i)
        rest = partition.complement_rows(i)
        if held.size == 0 or rest.size == 0:
            raise ValueError(f"fold {i + 1} is empty or covers all rows")
        level = null_model_level(kind, data.responses[rest])
        d = data.responses[held]
        errors.append(_validation_error(kind, np.full(d.shape, level), d))
    return CvResult(np.array(errors))


# -- closed-form candidate scores ---------------------------------------------


def _as_row_array(current_forecasts, data: Dataset) -> np.ndarray:
    if isinstance(current_forecasts, dict):
        return np.array([current_forecasts[k] for k in data.keys], dtype=float)
    fc = np.asarray(current_forecasts, dtype=float)
    if fc.shape != (len(data),):
        raise ValueError("current forecasts must cover every row")
    return fc


def cell_residual(kind, cells: np.ndarray, n_cells: int, fitted: np.ndarray, actuals: np.ndarray) -> float:
    """Minimal squared residual after rescaling ``fitted`` by one weight per cell.

    ES minimizes ``sum (fitted * w - d)^2``; PES minimizes
    ``sum (r * w - 1)^2`` with ``r = fitted / d``. Empty cells contribute 0.
    """
    kind = LossKind.parse(kind)
    if kind is LossKind.ES:
        x, y = fitted, actuals
    else:
        x, y = fitted / actuals, np.ones_like(actuals)
    sxy = np.bincount(cells, weights=x * y, minlength=n_cells)
    sxx = np.bincount(cells, weights=x * x, minlength=n_cells)
    w = np.divide(sxy, sxx, out=np.zeros(n_cells), where=sxx > 0)
    r = x * w[cells] - y
    return float(r @ r)


def fas_score(attribute: int, current_forecasts, data: Dataset, kind, lambda_A: float) -> float:
    fc = _as_row_array(current_forecasts, data)
    n = data.schema[attribute].n_levels
    resid = cell_residual(kind, data.levels[:, attribute], n, fc, data.responses)
    return resid + lambda_A * n


def fis_score(interaction, current_forecasts, data: Dataset, kind, lambda_I: float) -> float:
    c, d = interaction
    fc = _as_row_array(current_forecasts, data)
    n_c, n_d = data.schema[c].n_levels, data.schema[d].n_levels
    cells = data.levels[:, c] * n_d + data.levels[:, d]
    resid = cell_residual(kind, cells, n_c * n_d, fc, data.responses)
    return resid + lambda_I * n_c * n_d


def cross_attribute(data: Dataset, c: int, d: int) -> tuple[Dataset, int]:
    """Append the product attribute ``c x d`` to ``data``; returns (dataset, its index)."""
    a, b = data.schema[c], data.schema[d]
    levels = tuple(f"{u}|{v}" for u in a.levels for v in b.levels)
    schema = AttributeSchema(data.schema.attributes + (Attribute(f"{a.name}x{b.name}", levels),))
    col = data.levels[:, c] * b.n_levels + data.levels[:, d]
    new = Dataset(schema, np.column_stack([data.levels, col]), data.responses, data.keys, data.role, data.extras)
    return new, len(schema) - 1


# -- forward subset selection ---------------------------------------------------


def _fit_current(data, features, kind, train_cfg):
    report = train(data, features, kind, train_cfg.unregularized())
    return predict(report.final_params, features, data)


def fss(
    direction: int,
    current: FeatureConfig,
    data: Dataset,
    kind,
    cfg: SelectionConfig,
    fitted: np.ndarray | None = None,
    scores_out: dict | None = None,
):
    """Pick attributes (direction +1) or interactions (-1) to add.

    Returns ``(added_attributes, added_interactions)``; at most one is
    non-empty and both are empty when no candidate is left. ``fitted`` may
    carry precomputed current fitted values.
    """
    if direction not in (ADD_ATTRIBUTES, ADD_INTERACTIONS):
        raise ValueError("direction must be +1 or -1")
    kind = LossKind.parse(kind)
    schema = data.schema
    if direction == ADD_ATTRIBUTES:
        pool = [c for c in range(len(schema)) if c not in current.attributes]
    else:
        pool = [p for p in schema.interaction_universe if p not in current.interactions]
    if not pool:
        return (), ()
    if fitted is None:
        fitted = _fit_current(data, current, kind, cfg.train)

    if direction == ADD_ATTRIBUTES:
        scored = [(fas_score(c, fitted, data, kind, cfg.lambda_A), i, c) for i, c in enumerate(pool)]
        scored.sort()
        if scores_out is not None:
            scores_out.update({schema[c].name: s for s, _, c in scored})
        return tuple(c for _, _, c in scored[: min(cfg.b, len(pool))]), ()

    scored = [(fis_score(p, fitted, data, kind, cfg.lambda_I), i, p) for i, p in enumerate(pool)]
    scored.sort()
    if scores_out is not None:
        scores_out.update({f"{schema[c].name}x{schema[d].name}": s for s, _, (c, d) in scored})
    used = set(current.interaction_attributes)
    chosen = []
    for _, _, (c, d) in scored:
        if len(chosen) == cfg.g:
            break
        if c in used or d in used:
            continue
        chosen.append((c, d))
        used.update((c, d))
    return (), tuple(chosen)


# -- cross-validation and significance ---------------------------------------------


def cross_validate(
    features: FeatureConfig, partition: KFoldPartition, data: Dataset, kind, train_cfg: TrainConfig
) -> CvResult:
    """Train on k-1 folds, score the held-out fold (MAE for ES, MAPE for PES)."""
    kind = LossKind.parse(kind)
    if partition.folds.shape != (len(data),):
        raise ValueError("partition does not match the dataset")
    errors = []
    for i in range(partition.k):
        held = partition.fold_rows(i)
        fold_train = data.subset(partition.complement_rows(i))
        fold_test = data.subset(held)
        report = train(fold_train, features, kind, train_cfg)
        fc = predict(report.final_params, features, fold_test)
        errors.append(_validation_error(kind, fc, fold_test.responses))
    return CvResult(np.array(errors))


def paired_t_statistic(candidate, incumbent) -> float:
    """t statistic of the paired differences ``incumbent - candidate``.

    Zero-variance differences give +-inf for a nonzero mean and 0 otherwise.
    """
    c = np.asarray(getattr(candidate, "errors", candidate), dtype=float)
    b = np.asarray(getattr(incumbent, "errors", incumbent), dtype=float)
    if c.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    if c.size < 2:
        raise ValueError("paired t-test needs at least two pairs")
    diff = b - c
    mean = diff.mean()
    sd = diff.std(ddof=1)
    if sd == 0 or not np.isfinite(sd):
        return float(np.sign(mean) * np.inf) if mean != 0 else 0.0
    return float(mean / (sd / np.sqrt(diff.size)))


def paired_t_test(candidate, incumbent, alpha: float = 0.05) -> bool:
    """One-sided paired t-test: are the candidate's fold errors significantly smaller?"""
    t = paired_t_statistic(candidate, incumbent)
    n = len(getattr(candidate, "errors", candidate))
    return bool(t > stats.t.ppf(1.0 - alpha, n - 1))


# -- the greedy search ----------------------------------------------------------------


@dataclass
class SelectionResult:
    features: FeatureConfig
    cv: CvResult
    partition: KFoldPartition
    trace: list[dict] = field(default_factory=list)

    @property
    def attempts(self) -> int:
        return len(self.trace)

    def to_dict(self, schema: AttributeSchema) -> dict:
        return {
            "features": self.features.to_dict(schema),
            "cv_errors": [float(e) for e in self.cv.errors],
            "partition": self.partition.to_dict(),
            "trace": self.trace,
        }

    def save_json(self, path, schema: AttributeSchema) -> None:
        Path(path).write_text(json.dumps(self.to_dict(schema), indent=1))


def gfsfs(data: Dataset, kind, cfg: SelectionConfig, partition: KFoldPartition | None = None) -> SelectionResult:
    """Greedy forward stepwise feature selection.

    Starts from the null model's cross-validation errors and alternates
    search directions, beginning with attributes. An accepted augmentation
    re-enables both directions; a rejected or empty one disables the current
    direction. The search stops as soon as the current direction is disabled.
    """
    kind = LossKind.parse(kind)
    schema = data.schema
    if partition is None:
        partition = partition_kfold(data, cfg.k, cfg.seed)
    inner = cfg.train.unregularized()

    best = FeatureConfig()
    best_cv = null_model_cv_errors(kind, partition, data)
    feasible = {ADD_ATTRIBUTES: True, ADD_INTERACTIONS: True}
    direction = ADD_ATTRIBUTES
    trace: list[dict] = []
    fitted_cache: dict[FeatureConfig, np.ndarray] = {}
    log.info("null model: mean CV error %.6g", best_cv.mean)

    while feasible[direction]:
        scores: dict = {}
        has_pool = bool(
            [c for c in range(len(schema)) if c not in best.attributes]
            if direction == ADD_ATTRIBUTES
            else [p for p in schema.interaction_universe if p not in best.interactions]
        )
        if has_pool and best not in fitted_cache:
            fitted_cache[best] = _fit_current(data, best, kind, cfg.train)
        d_attr, d_inter = fss(direction, best, data, kind, cfg, fitted=fitted_cache.get(best), scores_out=scores)
        entry = {
            "iteration": len(trace) + 1,
            "direction": direction,
            "candidate_scores": scores,
            "added_attributes": [schema[c].name for c in d_attr],
            "added_interactions": [[schema[c].name, schema[d].name] for c, d in d_inter],
        }
        if d_attr or d_inter:
            candidate = best.extend(d_attr, d_inter)
            cv = cross_validate(candidate, partition, data, kind, inner)
            t = paired_t_statistic(cv, best_cv)
            accepted = paired_t_test(cv, best_cv, cfg.alpha)
            entry.update(cv_errors=[float(e) for e in cv.errors], t_statistic=t, accepted=accepted)
            if accepted:
                best, best_cv = candidate, cv
                feasible[ADD_ATTRIBUTES] = feasible[ADD_INTERACTIONS] = True
            else:
                feasible[direction] = False
            log.info("step %d dir %+d: %s t=%.3g %s", entry["iteration"], direction,
                     candidate.describe(schema), t, "accepted" if accepted else "rejected")
        else:
            entry.update(accepted=False, empty=True)
            feasible[direction] = False
        trace.append(entry)
        if feasible[-direction]:
            direction = -direction

    return SelectionResult(best, best_cv, partition, trace)
