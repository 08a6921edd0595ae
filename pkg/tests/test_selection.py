import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from efm.abgd import TrainConfig
from efm.model import FeatureConfig
from efm.schema import KFoldPartition, build_dataset, partition_kfold
from efm.selection import (
    CvResult,
    SelectionConfig,
    cross_attribute,
    cross_validate,
    fas_score,
    fis_score,
    fss,
    gfsfs,
    null_model_beta0,
    null_model_cv_errors,
    paired_t_statistic,
    paired_t_test,
)

from synth import planted_efm


def grid_argmin(fun, lo, hi, step=1e-6):
    """Coarse-to-fine scan of a vectorized ``fun`` down to grid spacing ``step``."""
    for h in (1e-2, 1e-4, step):
        xs = np.arange(lo, hi + h, h)
        best = xs[np.argmin(fun(xs))]
        lo, hi = best - 10 * h, best + 10 * h
    return best


def numeric_cell_objective(kind, cells, n_cells, fitted, actuals):
    """Minimize the rescaled residual over free per-cell log-weights with BFGS."""
    used = np.unique(cells)

    def obj(z):
        w = np.ones(n_cells)
        w[used] = np.exp(z)
        pred = fitted * w[cells]
        e = pred - actuals if kind == "ES" else (pred - actuals) / actuals
        return float(e @ e)

    z0 = np.zeros(used.size)
    res = optimize.minimize(obj, z0, method="BFGS", options={"gtol": 1e-12, "maxiter": 10_000})
    res = optimize.minimize(obj, res.x, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20_000})
    return res.fun


def _sel_cfg(**kw):
    base = dict(train=TrainConfig(0.5 / 300, 400), b=2, g=2)
    base.update(kw)
    return SelectionConfig(**base)


class TestNullModel:
    def test_constant(self):
        for kind in ("ES", "PES"):
            assert null_model_beta0(kind, [3.0, 3.0, 3.0]) == pytest.approx(np.log(3.0), abs=1e-15)

    def test_hand_values(self):
        assert null_model_beta0("ES", [1, 2, 4]) == pytest.approx(np.log(7 / 3), abs=1e-15)
        assert null_model_beta0("PES", [1, 2, 4]) == pytest.approx(np.log(4 / 3), abs=1e-15)

    @pytest.mark.parametrize("kind", ["ES", "PES"])
    def test_grid_oracle(self, kind):
        d = np.array([1.0, 2.0, 4.0])

        def f(b):
            b = np.atleast_1d(b)[:, None]
            e = np.exp(b) - d
            if kind == "PES":
                e = e / d
            return (e * e).sum(axis=1)

        oracle = grid_argmin(f, -1.0, 3.0)
        assert null_model_beta0(kind, d) == pytest.approx(oracle, abs=2e-6)

    def test_empty(self):
        with pytest.raises(ValueError):
            null_model_beta0("ES", [])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-2, 1e3), min_size=1, max_size=30))
    def test_pes_level_below_es_level(self, d):
        pes, es = null_model_beta0("PES", d), null_model_beta0("ES", d)
        assert pes <= es + 1e-12
        if np.ptp(d) > 1e-6 * max(d):
            assert pes < es


class TestNullCv:
    def _setup(self):
        data = build_dataset({"a": ["x"] * 4}, [2.0, 2.0, 4.0, 4.0])
        return data, KFoldPartition(np.array([0, 0, 1, 1]), 2, 0)

    def test_es(self):
        data, part = self._setup()
        np.testing.assert_allclose(null_model_cv_errors("ES", part, data).errors, [2.0, 2.0])

    def test_pes(self):
        data, part = self._setup()
        np.testing.assert_allclose(null_model_cv_errors("PES", part, data).errors, [1.0, 0.5])

    def test_constant(self):
        data = build_dataset({"a": ["x"] * 10}, [5.0] * 10)
        cv = null_model_cv_errors("PES", partition_kfold(data, 5, 0), data)
        np.testing.assert_array_equal(cv.errors, 0.0)


class TestClosedFormScores:
    def test_explanatory_attribute(self):
        data = build_dataset({"a": ["p", "p", "q", "q"]}, [2.0, 2.0, 3.0, 3.0])
        for kind in ("ES", "PES"):
            assert fas_score(0, np.ones(4), data, kind, 0.7) == pytest.approx(1.4, abs=1e-12)

    def test_single_level(self):
        data = build_dataset({"a": ["p"] * 3}, [1.0, 5.0, 2.0])
        assert fas_score(0, data.responses, data, "PES", 0.3) == pytest.approx(0.3, abs=1e-12)

    def test_penalty_flips_order(self):
        # a: two levels, nearly explanatory; b: one level, no explanatory power
        d = np.array([1.0, 1.1, 3.0, 3.1])
        data = build_dataset({"a": ["p", "p", "q", "q"], "b": ["z"] * 4}, d)
        fc = np.full(4, 2.0)
        assert fas_score(0, fc, data, "ES", 0.0) < fas_score(1, fc, data, "ES", 0.0)
        assert fas_score(0, fc, data, "ES", 100.0) > fas_score(1, fc, data, "ES", 100.0)

    def test_forecast_map_accepted(self):
        data = build_dataset({"a": ["p", "q"]}, [1.0, 2.0])
        fc = dict(zip(data.keys, [1.5, 1.5]))
        assert fas_score(0, fc, data, "ES", 0.0) == fas_score(0, np.array([1.5, 1.5]), data, "ES", 0.0)

    @pytest.mark.parametrize("kind", ["ES", "PES"])
    def test_fas_numeric_oracle(self, kind):
        rng = np.random.default_rng(21)
        for _ in range(10):
            n, levels = int(rng.integers(5, 30)), int(rng.integers(2, 5))
            lv = rng.integers(0, levels, n)
            d = np.exp(rng.normal(1.0, 0.8, n))
            fc = np.exp(rng.normal(1.0, 0.5, n))
            data = build_dataset({"a": lv.astype(str)}, d)
            n_lv = data.schema[0].n_levels
            want = numeric_cell_objective(kind, data.levels[:, 0], n_lv, fc, d)
            got = fas_score(0, fc, data, kind, 0.0)
            assert got == pytest.approx(want, rel=1e-6, abs=1e-12)

    @pytest.mark.parametrize("kind", ["ES", "PES"])
    def test_fis_numeric_oracle(self, kind):
        rng = np.random.default_rng(22)
        for _ in range(10):
            n = int(rng.integers(8, 40))
            a, b = rng.integers(0, 3, n), rng.integers(0, 2, n)
            d = np.exp(rng.normal(1.0, 0.8, n))
            fc = np.exp(rng.normal(1.0, 0.5, n))
            data = build_dataset({"a": a.astype(str), "b": b.astype(str)}, d)
            na, nb = data.schema[0].n_levels, data.schema[1].n_levels
            cells = data.levels[:, 0] * nb + data.levels[:, 1]
            want = numeric_cell_objective(kind, cells, na * nb, fc, d)
            got = fis_score((0, 1), fc, data, kind, 0.25)
            assert got - 0.25 * na * nb == pytest.approx(want, rel=1e-6, abs=1e-12)

    def test_fis_constant_cell_ratio(self):
        a = np.array([0, 0, 1, 1, 0, 1])
        b = np.array([0, 1, 0, 1, 0, 1])
        ratio = np.array([[2.0, 3.0], [0.5, 7.0]])
        fc = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        data = build_dataset({"a": a.astype(str), "b": b.astype(str)}, fc * ratio[a, b])
        for kind in ("ES", "PES"):
            assert fis_score((0, 1), fc, data, kind, 0.1) == pytest.approx(0.1 * 4, abs=1e-12)

    def test_fis_single_levels(self):
        data = build_dataset({"a": ["x"] * 3, "b": ["y"] * 3}, [1.0, 2.0, 3.0])
        assert fis_score((0, 1), data.responses, data, "ES", 0.6) == pytest.approx(0.6, abs=1e-12)

    @pytest.mark.parametrize("kind", ["ES", "PES"])
    def test_synthetic_attribute_equivalence(self, kind):
        rng = np.random.default_rng(23)
        for _ in range(20):
            n = int(rng.integers(5, 50))
            data = build_dataset(
                {"a": rng.integers(0, 3, n).astype(str), "b": rng.integers(0, 4, n).astype(str)},
                np.exp(rng.normal(0, 1, n)),
            )
            fc = np.exp(rng.normal(0, 1, n))
            crossed, idx = cross_attribute(data, 0, 1)
            assert fis_score((0, 1), fc, data, kind, 0.0) == fas_score(idx, fc, crossed, kind, 0.0)


class TestFss:
    def test_no_candidates(self):
        data = build_dataset({"a": ["x", "y"], "b": ["u", "v"]}, [1.0, 2.0])
        cfg = _sel_cfg()
        assert fss(+1, FeatureConfig((0, 1)), data, "PES", cfg) == ((), ())
        assert fss(-1, FeatureConfig((), ((0, 1),)), data, "PES", cfg) == ((), ())

    def test_explanatory_attribute_selected(self):
        data = build_dataset({"a": ["u", "v", "u", "v"], "b": ["p", "p", "q", "q"]}, [2.0, 2.0, 3.0, 3.0])
        cfg = _sel_cfg(b=1, train=TrainConfig(0.1, 500))
        assert fss(+1, FeatureConfig(), data, "PES", cfg) == ((1,), ())

    def test_interactions_sharing_attribute(self):
        rng = np.random.default_rng(5)
        n = 120
        lv = rng.integers(0, 2, (n, 3))
        s = 0.6 * (2 * lv[:, 0] - 1) * (2 * lv[:, 1] - 1) + rng.normal(0, 0.05, n)
        data = build_dataset({f"c{i}": lv[:, i].astype(str) for i in range(3)}, np.exp(s + 1.0))
        cfg = _sel_cfg(g=2, train=TrainConfig(0.5 / n, 300))
        scores = {}
        added_a, added_i = fss(-1, FeatureConfig(), data, "PES", cfg, scores_out=scores)
        assert added_a == ()
        assert len(added_i) == 1
        best = min(scores, key=scores.get)
        assert added_i == ((0, 1),) and best == "c0xc1"

    def test_filter_matches_oracle(self):
        rng = np.random.default_rng(8)
        n = 150
        lv = rng.integers(0, 3, (n, 6))
        data = build_dataset({f"c{i}": lv[:, i].astype(str) for i in range(6)}, np.exp(rng.normal(1, 0.5, n)))
        current = FeatureConfig((0,), ((4, 5),))
        cfg = _sel_cfg(g=2, train=TrainConfig(0.5 / n, 200))
        fitted = np.exp(rng.normal(1, 0.1, n))
        _, got = fss(-1, current, data, "PES", cfg, fitted=fitted)

        # oracle: score everything, sort with pair order as tie-break, filter greedily
        cands = [p for p in data.schema.interaction_universe if p not in current.interactions]
        ranked = sorted(cands, key=lambda p: (fis_score(p, fitted, data, "PES", cfg.lambda_I), p))
        used, want = {4, 5}, []
        for c, d in ranked:
            if len(want) < 2 and c not in used and d not in used:
                want.append((c, d))
                used |= {c, d}
        assert list(got) == want

    def test_ties_break_by_schema_order(self):
        data = build_dataset({"a": ["x", "y"], "b": ["x", "y"], "c": ["x", "y"]}, [1.0, 2.0])
        cfg = _sel_cfg(b=2)
        assert fss(+1, FeatureConfig(), data, "ES", cfg, fitted=np.ones(2)) == ((0, 1), ())


class TestCrossValidate:
    def test_constant_null(self):
        data = build_dataset({"a": ["x"] * 10}, [4.0] * 10)
        part = partition_kfold(data, 5, 0)
        cv = cross_validate(FeatureConfig(), part, data, "PES", TrainConfig(0.1, 200))
        assert len(cv) == 5
        np.testing.assert_allclose(cv.errors, 0.0, atol=1e-9)

    def test_deterministic(self):
        data = planted_efm(3, n=100, n_noise=1)
        part = partition_kfold(data, 5, 1)
        cfg = TrainConfig(0.5 / 100, 100, seed=4)
        a = cross_validate(FeatureConfig((0,), ((1, 2),)), part, data, "PES", cfg)
        b = cross_validate(FeatureConfig((0,), ((1, 2),)), part, data, "PES", cfg)
        assert a.errors.tobytes() == b.errors.tobytes()


class TestPairedTTest:
    def test_identical(self):
        assert not paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_uniform_improvement(self):
        assert paired_t_test(CvResult(np.ones(5)), CvResult(np.full(5, 10.0)), 0.05)

    def test_worse_everywhere(self):
        assert not paired_t_test([2.0, 3.0, 4.0, 5.0, 6.0], [1.0, 2.0, 3.0, 4.0, 5.5])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_matches_scipy(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            inc = rng.normal(1.0, 0.2, 5)
            cand = inc - rng.normal(0.05, 0.1, 5)
            ref = stats.ttest_rel(inc, cand, alternative="greater")
            assert paired_t_statistic(cand, inc) == pytest.approx(ref.statistic, rel=1e-10)
            assert paired_t_test(cand, inc, 0.05) == bool(ref.pvalue < 0.05)


class TestGfsfs:
    def test_noise_only_selects_nothing(self):
        empty = 0
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            n = 150
            data = build_dataset(
                {f"a{i}": rng.integers(0, 3, n).astype(str) for i in range(4)}, np.exp(rng.normal(2, 0.3, n))
            )
            res = gfsfs(data, "PES", _sel_cfg(train=TrainConfig(0.5 / n, 300), seed=seed))
            if res.features.is_null:
                empty += 1
                np.testing.assert_allclose(
                    res.cv.errors, null_model_cv_errors("PES", res.partition, data).errors
                )
        assert empty >= 4

    def test_planted(self):
        data = planted_efm(0)
        res = gfsfs(data, "PES", _sel_cfg())
        assert res.features.attributes == (0, 1)

    def test_single_attribute_trace(self):
        data = build_dataset({"a": ["p", "q"] * 10}, [1.0, 5.0] * 10)
        res = gfsfs(data, "PES", _sel_cfg(train=TrainConfig(0.05, 600)))
        assert res.features == FeatureConfig((0,))
        dirs = [(e["direction"], e["accepted"], e.get("empty", False)) for e in res.trace]
        assert dirs == [(1, True, False), (-1, False, True), (1, False, True)]

    def test_invariants_and_export(self, tmp_path):
        data = planted_efm(2, n=200, n_noise=3)
        res = gfsfs(data, "ES", _sel_cfg(train=TrainConfig(0.5 / (200 * 400), 300), g=2))
        schema = data.schema
        n_a, n_i = len(schema), len(schema.interaction_universe)
        assert res.attempts <= 2 * (n_a + n_i)
        used = [c for pair in res.features.interactions for c in pair]
        assert len(used) == len(set(used))
        means = [np.mean(e["cv_errors"]) for e in res.trace if e.get("accepted")]
        assert all(b <= a for a, b in zip(means, means[1:]))
        res.save_json(tmp_path / "sel.json", schema)
        dumped = json.loads((tmp_path / "sel.json").read_text())
        assert dumped["features"] == res.features.to_dict(schema)
        assert {"iteration", "direction", "candidate_scores", "accepted"} <= set(dumped["trace"][0])

    def test_config_validation(self):
        from efm.errors import ConfigError

        for bad in (dict(b=0), dict(g=0), dict(k=1), dict(lambda_A=-1.0), dict(alpha=1.5)):
            with pytest.raises(ConfigError):
                _sel_cfg(**bad)
