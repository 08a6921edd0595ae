"""Exponential factorization machine over attribute levels.

The linear score of an observation is

    beta0 + sum_{c in sA} beta[c][level(c)]
          + sum_{(c, c') in sI} <mu[c][level(c)], mu[c'][level(c')]>

and the forecast is its exponential. Parameters are kept per attribute
(one row per level), so interactions between two levels of the same
attribute cannot be expressed at all.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingParameterError, SchemaError
from .schema import AttributeSchema, Dataset, Observation

MAX_EXPONENT = 500.0
MODEL_FORMAT = "efm-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class FeatureConfig:
    """Selected attributes ``sA`` and interactions ``sI`` (attribute indices)."""

    attributes: tuple[int, ...] = ()
    interactions: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        attrs = tuple(sorted(set(int(c) for c in self.attributes)))
        pairs = set()
        for c, d in self.interactions:
            c, d = int(c), int(d)
            if c == d:
                raise SchemaError(f"interaction ({c}, {d}) pairs an attribute with itself")
            pairs.add((min(c, d), max(c, d)))
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "interactions", tuple(sorted(pairs)))

    @property
    def interaction_attributes(self) -> tuple[int, ...]:
        """``sAI``: attributes that take part in at least one interaction."""
        return tuple(sorted({c for pair in self.interactions for c in pair}))

    @property
    def is_null(self) -> bool:
        return not self.attributes and not self.interactions

    def partners(self, c: int) -> list[int]:
        return [d if e == c else e for e, d in self.interactions if c in (e, d)]

    def extend(self, attributes=(), interactions=()) -> "FeatureConfig":
        return FeatureConfig(self.attributes + tuple(attributes), self.interactions + tuple(interactions))

    def validate(self, schema: AttributeSchema) -> None:
        a = len(schema)
        for c in self.attributes + self.interaction_attributes:
            if not 0 <= c < a:
                raise SchemaError(f"attribute index {c} outside schema of {a} attributes")

    def to_dict(self, schema: AttributeSchema) -> dict:
        return {
            "attributes": [schema[c].name for c in self.attributes],
            "interactions": [[schema[c].name, schema[d].name] for c, d in self.interactions],
        }

    @classmethod
    def from_dict(cls, d: dict, schema: AttributeSchema) -> "FeatureConfig":
        return cls(
            tuple(schema.index_of(n) for n in d.get("attributes", [])),
            tuple((schema.index_of(a), schema.index_of(b)) for a, b in d.get("interactions", [])),
        )

    def describe(self, schema: AttributeSchema) -> str:
        attrs = ", ".join(schema[c].name for c in self.attributes) or "-"
        inter = ", ".join(f"{schema[c].name}x{schema[d].name}" for c, d in self.interactions) or "-"
        return f"attributes [{attrs}] interactions [{inter}]"


@dataclass
class ParameterSet:
    """Model parameters.

    ``beta[c]`` has one entry per level of attribute ``c``; ``mu[c]`` has
    shape ``(n_levels, f)``.
    """

    beta0: float
    beta: dict[int, np.ndarray] = field(default_factory=dict)
    mu: dict[int, np.ndarray] = field(default_factory=dict)
    f: int = 2

    def __post_init__(self):
        if self.f < 1:
            raise ConfigError("factorization dimensionality f must be >= 1")
        for c, m in self.mu.items():
            if m.ndim != 2 or m.shape[1] != self.f:
                raise SchemaError(f"mu vectors of attribute {c} must have length f={self.f}")

    @classmethod
    def zeros(cls, schema: AttributeSchema, features: FeatureConfig, f: int = 2) -> "ParameterSet":
        n = schema.n_levels
        return cls(
            0.0,
            {c: np.zeros(n[c]) for c in features.attributes},
            {c: np.zeros((n[c], f)) for c in features.interaction_attributes},
            f,
        )

    @classmethod
    def initialize(cls, schema, features, f, sigma, rng) -> "ParameterSet":
        """Zero intercept and main effects; factor entries drawn N(0, sigma).

        Draws happen attribute by attribute in schema order, level-major.
        """
        params = cls.zeros(schema, features, f)
        for c in features.interaction_attributes:
            params.mu[c] = rng.normal(0.0, sigma, size=params.mu[c].shape) if sigma > 0 else params.mu[c]
        return params

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            float(self.beta0),
            {c: v.copy() for c, v in self.beta.items()},
            {c: m.copy() for c, m in self.mu.items()},
            self.f,
        )

    def parameter_ids(self) -> list[tuple]:
        ids = [("beta0",)]
        for c in sorted(self.beta):
            ids += [("beta", c, j) for j in range(self.beta[c].size)]
        for c in sorted(self.mu):
            ids += [("mu", c, j, p) for j in range(self.mu[c].shape[0]) for p in range(self.f)]
        return ids

    def get(self, theta: tuple) -> float:
        try:
            if theta[0] == "beta0":
                return float(self.beta0)
            if theta[0] == "beta":
                return float(self.beta[theta[1]][theta[2]])
            if theta[0] == "mu":
                return float(self.mu[theta[1]][theta[2], theta[3]])
        except (KeyError, IndexError):
            pass
        raise MissingParameterError(f"no parameter {theta}")

    def set(self, theta: tuple, value: float) -> None:
        self.get(theta)
        if theta[0] == "beta0":
            self.beta0 = float(value)
        elif theta[0] == "beta":
            self.beta[theta[1]][theta[2]] = value
        else:
            self.mu[theta[1]][theta[2], theta[3]] = value

    def to_vector(self) -> np.ndarray:
        parts = [np.array([self.beta0])]
        parts += [self.beta[c] for c in sorted(self.beta)]
        parts += [self.mu[c].ravel() for c in sorted(self.mu)]
        return np.concatenate(parts)

    def from_vector(self, vec) -> "ParameterSet":
        """New parameter set with this one's layout and values from ``vec``."""
        vec = np.asarray(vec, dtype=float)
        out = self.copy()
        out.beta0 = float(vec[0])
        pos = 1
        for c in sorted(out.beta):
            n = out.beta[c].size
            out.beta[c] = vec[pos:pos + n].copy()
            pos += n
        for c in sorted(out.mu):
            n = out.mu[c].size
            out.mu[c] = vec[pos:pos + n].reshape(out.mu[c].shape).copy()
            pos += n
        if pos != vec.size:
            raise ValueError("vector length does not match the parameter layout")
        return out

    def penalty(self, lambda_v: float, lambda_w: float) -> float:
        """``0.5 * sum lambda * theta**2``; the intercept is never penalized."""
        b = sum(float(v @ v) for v in self.beta.values())
        m = sum(float(np.sum(x * x)) for x in self.mu.values())
        return 0.5 * (lambda_v * b + lambda_w * m)


def _check(params: ParameterSet, features: FeatureConfig, levels: np.ndarray) -> None:
    for c in features.attributes:
        if c not in params.beta:
            raise MissingParameterError(f"no main-effect parameters for attribute {c}")
        if levels.size and levels[:, c].max() >= params.beta[c].size:
            raise MissingParameterError(f"attribute {c}: active level has no main-effect parameter")
    for c in features.interaction_attributes:
        if c not in params.mu:
            raise MissingParameterError(f"no factor parameters for attribute {c}")
        if levels.size and levels[:, c].max() >= params.mu[c].shape[0]:
            raise MissingParameterError(f"attribute {c}: active level has no factor parameter")


def _levels_of(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.levels
    if isinstance(data, Observation):
        return np.asarray(data.levels, dtype=np.int64)[None, :]
    return np.atleast_2d(np.asarray(data, dtype=np.int64))


def linear_scores(params: ParameterSet, features: FeatureConfig, data) -> np.ndarray:
    """Un-exponentiated FM score for each row (Dataset, Observation or level array)."""
    levels = _levels_of(data)
    _check(params, features, levels)
    s = np.full(levels.shape[0], float(params.beta0))
    for c in features.attributes:
        s += params.beta[c][levels[:, c]]
    for c, d in features.interactions:
        s += np.einsum("ij,ij->i", params.mu[c][levels[:, c]], params.mu[d][levels[:, d]])
    return s


def safe_exp(score: np.ndarray) -> tuple[np.ndarray, int]:
    """``exp`` with the exponent clamped to +-MAX_EXPONENT; returns the clamp count."""
    clipped = np.clip(score, -MAX_EXPONENT, MAX_EXPONENT)
    n = int(np.count_nonzero(clipped != score))
    if n:
        warnings.warn(f"{n} forecast exponent(s) clamped to +-{MAX_EXPONENT:g}", RuntimeWarning, stacklevel=2)
    return np.exp(clipped), n


def predict(params: ParameterSet, features: FeatureConfig, data) -> np.ndarray:
    return safe_exp(linear_scores(params, features, data))[0]


def forecast(params: ParameterSet, features: FeatureConfig, obs: Observation) -> float:
    return float(predict(params, features, obs)[0])


def logfm_forecast(params: ParameterSet, features: FeatureConfig, obs: Observation) -> float:
    """Plain FM score (no exponential) as used by the log-response baseline."""
    return float(linear_scores(params, features, obs)[0])


@dataclass(frozen=True)
class LinearDecomposition:
    """``log forecast = theta * h + g`` with ``h`` and ``g`` free of ``theta``."""

    h: float
    g: float


def decompose(params: ParameterSet, features: FeatureConfig, obs: Observation, theta: tuple) -> LinearDecomposition:
    value = params.get(theta)
    lv = np.asarray(obs.levels, dtype=np.int64)
    kind = theta[0]
    if kind == "beta0":
        h = 1.0
    elif kind == "beta":
        c, j = theta[1], theta[2]
        h = 1.0 if (c in features.attributes and lv[c] == j) else 0.0
    else:
        c, j, p = theta[1], theta[2], theta[3]
        if c in features.interaction_attributes and lv[c] == j:
            h = float(sum(params.mu[d][lv[d], p] for d in features.partners(c)))
        else:
            h = 0.0
    # score is affine in theta, so the remainder is the score with theta zeroed
    zeroed = params.copy()
    zeroed.set(theta, 0.0)
    g = float(linear_scores(zeroed, features, obs)[0])
    if value != 0.0 and not np.isfinite(g):
        raise MissingParameterError(f"non-finite remainder for {theta}")
    return LinearDecomposition(h, g)


def score_gradient(params: ParameterSet, features: FeatureConfig, levels: np.ndarray, w: np.ndarray) -> ParameterSet:
    """``sum_i w_i * h_theta(x_i)`` for every parameter ``theta``.

    ``w`` is the derivative of the loss with respect to each row's linear
    score; the result is laid out like ``params``.
    """
    w = np.asarray(w, dtype=float)
    grad = ParameterSet(float(w.sum()), {}, {}, params.f)
    for c in features.attributes:
        grad.beta[c] = np.bincount(levels[:, c], weights=w, minlength=params.beta[c].size)
    for c in features.interaction_attributes:
        partner = np.zeros((levels.shape[0], params.f))
        for d in features.partners(c):
            partner += params.mu[d][levels[:, d]]
        n_c = params.mu[c].shape[0]
        grad.mu[c] = np.column_stack(
            [np.bincount(levels[:, c], weights=w * partner[:, p], minlength=n_c) for p in range(params.f)]
        )
    return grad


def model_to_dict(params, features, schema, **meta) -> dict:
    beta = {
        schema[c].name: {lv: float(v) for lv, v in zip(schema[c].levels, params.beta[c])}
        for c in sorted(params.beta)
    }
    mu = {
        schema[c].name: {lv: [float(x) for x in row] for lv, row in zip(schema[c].levels, params.mu[c])}
        for c in sorted(params.mu)
    }
    out = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "schema_hash": schema.fingerprint(),
        "schema": schema.to_dict(),
        "features": features.to_dict(schema),
        "f": params.f,
        "beta0": float(params.beta0),
        "beta": beta,
        "mu": mu,
    }
    out.update(meta)
    return out


def model_from_dict(d: dict):
    """Inverse of :func:`model_to_dict`: returns ``(params, features, schema, meta)``."""
    if d.get("format") != MODEL_FORMAT:
        raise ConfigError("not an EFM model file")
    if d.get("version") != MODEL_VERSION:
        raise ConfigError(f"unsupported model version {d.get('version')}")
    schema = AttributeSchema.from_dict(d["schema"])
    if schema.fingerprint() != d["schema_hash"]:
        raise ConfigError("model schema hash mismatch")
    features = FeatureConfig.from_dict(d["features"], schema)
    f = int(d["f"])
    beta, mu = {}, {}
    for name, table in d["beta"].items():
        c = schema.index_of(name)
        beta[c] = np.array([table[lv] for lv in schema[c].levels], dtype=float)
    for name, table in d["mu"].items():
        c = schema.index_of(name)
        mu[c] = np.array([table[lv] for lv in schema[c].levels], dtype=float).reshape(-1, f)
    params = ParameterSet(float(d["beta0"]), beta, mu, f)
    known = {"format", "version", "schema_hash", "schema", "features", "f", "beta0", "beta", "mu"}
    meta = {k: v for k, v in d.items() if k not in known}
    return params, features, schema, meta


def save_model(path, params, features, schema, **meta) -> None:
    Path(path).write_text(json.dumps(model_to_dict(params, features, schema, **meta), indent=1))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
