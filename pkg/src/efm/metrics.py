"""Forecast evaluation, training diagnostics, response distribution and the
ES/PES minimizer bound check.

Error rates (MAPE) are returned as fractions; multiply by 100 for percent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .loss import LossKind
from .model import MAX_EXPONENT, FeatureConfig, ParameterSet, linear_scores
from .schema import Dataset


@dataclass(frozen=True)
class EvaluationReport:
    mape_store: float
    mae_store: float
    mape_chain: float
    mae_chain: float
    n_rows: int
    n_items: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def write_csv(self, path) -> None:
        _write_row_csv(path, self.to_dict())


@dataclass(frozen=True)
class TrainingDiagnostics:
    mes: float
    mpes: float
    underestimation_ratio: float
    ratio_indicator: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def write_csv(self, path) -> None:
        _write_row_csv(path, self.to_dict())


def _write_row_csv(path, row: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(row))
        w.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])


def evaluate(forecasts: dict, actuals: dict) -> EvaluationReport:
    """Per-row (store) and per-item (chain) MAPE and MAE.

    Keys are ``(item, group)`` tuples. Chain figures first sum forecasts and
    actuals of each item over its groups, then average over items.
    """
    if set(forecasts) != set(actuals):
        missing = set(actuals) ^ set(forecasts)
        raise ValueError(f"forecast and actual keys differ ({len(missing)} unmatched, e.g. {next(iter(missing))})")
    if not actuals:
        raise ValueError("nothing to evaluate")
    keys = sorted(actuals)
    f = np.array([forecasts[k] for k in keys], dtype=float)
    a = np.array([actuals[k] for k in keys], dtype=float)
    if np.any(a <= 0):
        raise ValueError("actuals must be positive")
    abs_err = np.abs(f - a)

    items = sorted({k[0] for k in keys})
    idx = {it: i for i, it in enumerate(items)}
    item_of = np.array([idx[k[0]] for k in keys])
    f_sum = np.bincount(item_of, weights=f, minlength=len(items))
    a_sum = np.bincount(item_of, weights=a, minlength=len(items))
    if np.any(a_sum == 0):
        raise ValueError("an item has zero total actual")
    chain_err = np.abs(f_sum - a_sum)
    return EvaluationReport(
        mape_store=float(np.mean(abs_err / a)),
        mae_store=float(np.mean(abs_err)),
        mape_chain=float(np.mean(chain_err / a_sum)),
        mae_chain=float(np.mean(chain_err)),
        n_rows=len(keys),
        n_items=len(items),
    )


def diagnostics(fitted, actuals) -> TrainingDiagnostics:
    f = np.asarray(fitted, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if f.shape != a.shape:
        raise ValueError("fitted and actual lengths differ")
    if a.size == 0:
        raise ValueError("diagnostics need at least one point")
    if np.any(a <= 0):
        raise ValueError("actuals must be positive")
    e = f - a
    return TrainingDiagnostics(
        mes=float(np.mean(e**2)),
        mpes=float(np.mean((e / a) ** 2)),
        underestimation_ratio=float(np.mean(f < a)),
        ratio_indicator=float((a.max() / a.min()) ** 2),
    )


def response_distribution(actuals, bins: int = 4) -> np.ndarray:
    """Fraction of responses in ``[min, M/b), [M/b, 2M/b), ..., [(b-1)M/b, M]`` with ``M = max``.

    Bins are left-closed, the last one closed on both ends, so a constant
    sample lands entirely in the last bin.
    """
    a = np.asarray(actuals, dtype=float)
    if a.size == 0:
        raise ValueError("empty response sample")
    if bins < 1:
        raise ValueError("need at least one bin")
    top = a.max()
    edges = top * np.arange(1, bins) / bins
    idx = np.searchsorted(edges, a, side="right")
    return np.bincount(idx, minlength=bins) / a.size


def format_distribution(fractions, max_value: float | None = None) -> str:
    b = len(fractions)
    heads = []
    for i in range(b):
        lo = "Min" if i == 0 else f"{i / b:g}Max"
        hi = "Max" if i == b - 1 else f"{(i + 1) / b:g}Max"
        heads.append(f"[{lo}, {hi}{']' if i == b - 1 else ')'}")
    width = max(len(h) for h in heads) + 2
    line1 = "".join(h.rjust(width) for h in heads)
    line2 = "".join(f"{100 * x:.2f}%".rjust(width) for x in fractions)
    return line1 + "\n" + line2


# -- bound check between the ES and PES minimizers ---------------------------------


@dataclass
class Theorem1Report:
    """Losses of both minimizers under both criteria.

    ``les_at_es`` is the ES loss at the ES minimizer, ``les_at_pes`` the ES
    loss at the PES minimizer, and so on. The bounds require
    ``les_at_es <= les_at_pes <= ratio * les_at_es`` and the mirror
    statement for the PES loss.
    """

    les_at_es: float
    les_at_pes: float
    lpes_at_pes: float
    lpes_at_es: float
    ratio_indicator: float
    es_ratio: float
    pes_ratio: float
    tolerance: float
    violations: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        out = asdict(self)
        out["holds"] = self.holds
        return out


class GridMinimizationError(RuntimeError):
    pass


def grid_minimize(fun, center, half_width=8.0, points=11, tol=1e-10, max_rounds=200):
    """Zooming grid search for a few parameters.

    Evaluates ``fun`` (vectorized over rows of candidate points) on a regular
    grid, re-centres on the best point and shrinks the box until its
    half-width drops below ``tol``. Raises when the best point sits on the
    outer edge of the initial box.
    """
    center = np.asarray(center, dtype=float)
    p = center.size
    if p == 0:
        return center, float(fun(center[None, :])[0])
    if p > 3:
        raise ValueError("grid minimization supports at most 3 parameters")
    lo0, hi0 = center - half_width, center + half_width
    h = np.full(p, float(half_width))
    axis = np.linspace(-1.0, 1.0, points)
    mesh = np.stack(np.meshgrid(*([axis] * p), indexing="ij"), -1).reshape(-1, p)
    best = center
    for _ in range(max_rounds):
        cand = np.clip(best + mesh * h, lo0, hi0)
        vals = fun(cand)
        best = cand[int(np.nanargmin(vals))]
        if np.all(h < tol):
            break
        h = h * (4.0 / (points - 1))
    else:
        raise GridMinimizationError("grid refinement did not converge")
    if np.any(np.isclose(best, lo0) | np.isclose(best, hi0)):
        raise GridMinimizationError("minimizer on the boundary of the search box")
    return best, float(fun(best[None, :])[0])


def _design(params, features, data):
    """Affine form ``score = base + X @ vector`` (valid without interactions)."""
    n = params.to_vector().size
    base = linear_scores(params.from_vector(np.zeros(n)), features, data)
    X = np.column_stack([linear_scores(params.from_vector(e), features, data) - base for e in np.eye(n)])
    return base, X


def _independent_columns(X) -> np.ndarray:
    keep = []
    for j in range(X.shape[1]):
        if np.linalg.matrix_rank(X[:, keep + [j]]) == len(keep) + 1:
            keep.append(j)
    return X[:, keep]


def _loss_surface(kind, base, X, d):
    scale = 1.0 / d if LossKind.parse(kind) is LossKind.PES else np.ones_like(d)

    def fun(points):
        s = np.clip(base + np.atleast_2d(points) @ X.T, -MAX_EXPONENT, MAX_EXPONENT)
        e = (np.exp(s) - d) * scale
        return 0.5 * np.einsum("ij,ij->i", e, e)

    return fun


def verify_theorem1(data: Dataset, features: FeatureConfig, rtol: float = 1e-7, f: int = 2) -> Theorem1Report:
    """Compute both minimizers by grid refinement and check the loss bounds.

    Only the intercept and main effects are supported. Redundant directions
    (the intercept is collinear with a full set of level effects) are
    dropped first since they do not change the attainable losses; at most
    three independent directions may remain.
    """
    if features.interactions:
        raise ValueError("bound check supports intercept and main effects only")
    params = ParameterSet.zeros(data.schema, features, f)
    d = data.responses
    base, X = _design(params, features, data)
    X = _independent_columns(X)
    if X.shape[1] > 3:
        raise ValueError(f"{X.shape[1]} free parameters; at most 3 supported")
    start = np.linalg.lstsq(X, np.log(d) - base, rcond=None)[0]

    surf_es = _loss_surface(LossKind.ES, base, X, d)
    surf_pes = _loss_surface(LossKind.PES, base, X, d)
    th_es, les_es = grid_minimize(surf_es, start)
    th_pes, lpes_pes = grid_minimize(surf_pes, start)
    les_pes = float(surf_es(th_pes[None, :])[0])
    lpes_es = float(surf_pes(th_es[None, :])[0])

    ratio = float((d.max() / d.min()) ** 2)
    scale = max(les_es, les_pes, lpes_es, lpes_pes, 1e-300)
    tol = rtol * scale + 1e-12

    def _ratio(num, den):
        if den <= tol:
            return 1.0 if num <= tol else float("inf")
        return num / den

    violations = []
    if les_es > les_pes + tol:
        violations.append("ES loss at ES minimizer exceeds ES loss at PES minimizer")
    if les_pes > ratio * les_es + tol:
        violations.append("ES loss at PES minimizer exceeds ratio bound")
    if lpes_pes > lpes_es + tol:
        violations.append("PES loss at PES minimizer exceeds PES loss at ES minimizer")
    if lpes_es > ratio * lpes_pes + tol:
        violations.append("PES loss at ES minimizer exceeds ratio bound")
    return Theorem1Report(
        les_at_es=les_es,
        les_at_pes=les_pes,
        lpes_at_pes=lpes_pes,
        lpes_at_es=lpes_es,
        ratio_indicator=ratio,
        es_ratio=_ratio(les_pes, les_es),
        pes_ratio=_ratio(lpes_es, lpes_pes),
        tolerance=tol,
        violations=violations,
    )
