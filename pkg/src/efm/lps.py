"""Straight-line regression under squared error (LS) and squared percentage
error (LPS), with a synthetic generator for comparing the two.

LPS divides each row, intercept column included, by its own response and
then solves a zero-intercept least-squares problem against a unit target.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .metrics import diagnostics


@dataclass(frozen=True)
class LinearModel:
    beta0: float
    beta1: float

    def __post_init__(self):
        if not (np.isfinite(self.beta0) and np.isfinite(self.beta1)):
            raise ValueError("coefficients must be finite")

    def predict(self, x) -> np.ndarray:
        return self.beta0 + self.beta1 * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 100
    beta0: float = 1200.0
    beta1: float = -10.0
    x_range: tuple[float, float] = (1.0, 50.0)
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not self.x_range[0] < self.x_range[1]:
            raise ValueError("x_range must be increasing")


def _xy(points):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be (x, d) pairs")
    if arr.shape[0] < 2:
        raise ValueError("need at least two points")
    return arr[:, 0], arr[:, 1]


def _solve2(a, b, y) -> LinearModel:
    """Least squares ``y ~ c0 * a + c1 * b`` through the 2x2 normal equations."""
    gram = np.array([[a @ a, a @ b], [a @ b, b @ b]])
    rhs = np.array([a @ y, b @ y])
    det = gram[0, 0] * gram[1, 1] - gram[0, 1] ** 2
    if det <= 1e-12 * gram[0, 0] * gram[1, 1]:
        raise ValueError("degenerate design: regressors are collinear")
    c0 = (gram[1, 1] * rhs[0] - gram[0, 1] * rhs[1]) / det
    c1 = (gram[0, 0] * rhs[1] - gram[0, 1] * rhs[0]) / det
    return LinearModel(float(c0), float(c1))


def ls_fit(points) -> LinearModel:
    x, d = _xy(points)
    if np.ptp(x) == 0:
        raise ValueError("degenerate design: all x equal")
    # centring keeps the normal equations well conditioned
    xm, dm = x.mean(), d.mean()
    xc = x - xm
    slope = float(xc @ (d - dm) / (xc @ xc))
    return LinearModel(float(dm - slope * xm), slope)


def instance_normalize(points) -> tuple[np.ndarray, np.ndarray]:
    """Regressors ``(1/d, x/d)`` per row and the all-ones target."""
    x, d = _xy(points)
    if np.any(d <= 0):
        raise ValueError("responses must be positive")
    return np.column_stack([1.0 / d, x / d]), np.ones_like(d)


def lps_fit(points) -> LinearModel:
    Z, y = instance_normalize(points)
    return _solve2(Z[:, 0], Z[:, 1], y)


def es_objective(model: LinearModel, points) -> float:
    x, d = _xy(points)
    e = model.predict(x) - d
    return float(e @ e)


def pes_objective(model: LinearModel, points) -> float:
    x, d = _xy(points)
    e = (model.predict(x) - d) / d
    return float(e @ e)


def generate_synthetic(cfg: SyntheticConfig) -> np.ndarray:
    """``(n, 2)`` array of ``(x, d)`` with ``d = beta0 + beta1 x + N(0, sigma)``.

    Points with ``d <= 0`` are redrawn one at a time, so every response is
    positive.
    """
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.x_range
    x = rng.uniform(lo, hi, cfg.n)
    d = cfg.beta0 + cfg.beta1 * x + rng.normal(0.0, cfg.sigma, cfg.n)
    for i in np.flatnonzero(d <= 0):
        for _ in range(10_000):
            x[i] = rng.uniform(lo, hi)
            d[i] = cfg.beta0 + cfg.beta1 * x[i] + rng.normal(0.0, cfg.sigma)
            if d[i] > 0:
                break
        else:
            raise ValueError("could not draw a positive response; sigma too large for the line")
    return np.column_stack([x, d])


SWEEP_COLUMNS = ("sigma", "ratio_indicator", "MES_ls", "MES_lps", "MPES_ls", "MPES_lps", "under_ls", "under_lps")


def sweep_sigma(sigmas, cfg: SyntheticConfig | None = None) -> list[dict]:
    """One row per noise level comparing LS and LPS fits on fresh samples.

    Sample ``i`` uses seed ``cfg.seed + i`` so each noise level gets its own
    draw, as in a sweep over independently generated datasets.
    """
    sigmas = list(sigmas)
    if not sigmas:
        raise ValueError("no sigma values given")
    cfg = cfg or SyntheticConfig()
    rows = []
    for i, s in enumerate(sigmas):
        pts = generate_synthetic(SyntheticConfig(cfg.n, cfg.beta0, cfg.beta1, cfg.x_range, float(s), cfg.seed + i))
        x, d = pts[:, 0], pts[:, 1]
        ls, lps = ls_fit(pts), lps_fit(pts)
        dl, dp = diagnostics(ls.predict(x), d), diagnostics(lps.predict(x), d)
        rows.append(
            {
                "sigma": float(s),
                "ratio_indicator": dl.ratio_indicator,
                "MES_ls": dl.mes,
                "MES_lps": dp.mes,
                "MPES_ls": dl.mpes,
                "MPES_lps": dp.mpes,
                "under_ls": dl.underestimation_ratio,
                "under_lps": dp.underestimation_ratio,
            }
        )
    return rows


def write_sweep_csv(rows, dest) -> None:
    """Write sweep rows to a path or an open text stream."""
    if hasattr(dest, "write"):
        _write_sweep(rows, dest)
        return
    with open(dest, "w", newline="") as fh:
        _write_sweep(rows, fh)


def _write_sweep(rows, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) for k, v in r.items()})
