"""Synthetic data generators shared by the tests."""

import numpy as np

from efm.schema import build_dataset


def random_instance(rng, max_attrs=4, max_levels=3, max_rows=40, f=2):
    """Small random dataset with random features and parameters."""
    from efm.model import FeatureConfig, ParameterSet

    a = int(rng.integers(1, max_attrs + 1))
    n_lv = rng.integers(1, max_levels + 1, a)
    n = int(rng.integers(2, max_rows + 1))
    cols = {f"c{i}": [f"l{v}" for v in rng.integers(0, n_lv[i], n)] for i in range(a)}
    data = build_dataset(cols, np.exp(rng.normal(0.5, 0.7, n)))
    attrs = tuple(int(c) for c in range(a) if rng.random() < 0.7)
    pairs = [(i, j) for i in range(a) for j in range(i + 1, a) if rng.random() < 0.5]
    feats = FeatureConfig(attrs, tuple(pairs))
    params = ParameterSet.initialize(data.schema, feats, f, 0.4, rng)
    params.beta0 = float(rng.normal(0.3, 0.3))
    for c in params.beta:
        params.beta[c] = rng.normal(0, 0.3, params.beta[c].shape)
    return data, feats, params


def planted_efm(seed, n=300, n_noise=5, effect=0.5, noise=0.1, levels=3):
    """Two informative attributes (a0, a1) plus ``n_noise`` pure-noise ones."""
    rng = np.random.default_rng(seed)
    a = 2 + n_noise
    L = rng.integers(0, levels, (n, a))
    eff = np.linspace(-effect, effect, levels)
    s = np.log(20.0) + eff[L[:, 0]] + 0.8 * eff[::-1][L[:, 1]] + rng.normal(0, noise, n)
    return build_dataset({f"a{i}": L[:, i].astype(str) for i in range(a)}, np.exp(s))


def planted_with_interaction(seed, n=400):
    """Main effects on a0, a1; a factorized interaction between a2 and a3; a4, a5 noise."""
    rng = np.random.default_rng(seed)
    L = rng.integers(0, 3, (n, 6))
    mu2 = 0.8 * np.array([[1, 0], [0, 1], [-1, -0.5]])
    mu3 = 0.8 * np.array([[1, 0.5], [0, -1], [-1, 0.5]])
    s = (
        np.log(20.0)
        + np.array([-0.5, 0, 0.5])[L[:, 0]]
        + np.array([0.4, 0, -0.4])[L[:, 1]]
        + np.einsum("ij,ij->i", mu2[L[:, 2]], mu3[L[:, 3]])
        + rng.normal(0, 0.1, n)
    )
    return build_dataset({f"a{i}": L[:, i].astype(str) for i in range(6)}, np.exp(s))


def skewed_efm(seed, n=200, noise=0.6):
    """Two informative attributes with heavy lognormal noise (wide response range)."""
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 3, n)
    b = rng.integers(0, 3, n)
    s = np.log(10.0) + np.array([-0.4, 0, 0.4])[a] + np.array([0.3, 0, -0.3])[b] + rng.normal(0, noise, n)
    return build_dataset({"a": a.astype(str), "b": b.astype(str)}, np.exp(s))
