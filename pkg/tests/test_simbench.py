import numpy as np
import pytest

from wlogit.diagnostics import auc
from wlogit.errors import DataError
from wlogit.glm import Dataset
from wlogit.linalg import default_rng
from wlogit.simbench import (
    CvResult,
    ScenarioConfig,
    gen_dataset,
    kfold_cv_auc,
    lasso_cv,
    make_sigma,
    roc_points,
    run_scenario,
)


def small_scenario(**overrides):
    base = dict(
        name="toy",
        p=25,
        n_train=60,
        n_test=30,
        d=4,
        effect_size=1.5,
        sigma="identity",
        balance="balanced",
        replications=2,
        seed=3,
        n_lambda=12,
        lambda_min_ratio=0.2,
        cv_folds=4,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


class TestMakeSigma:
    def test_identity(self):
        assert np.array_equal(make_sigma(3, 1, "identity"), np.eye(3))

    def test_blockwise_frozen_example(self):
        expected = np.array(
            [
                [1.0, 0.3, 0.5, 0.5],
                [0.3, 1.0, 0.5, 0.5],
                [0.5, 0.5, 1.0, 0.7],
                [0.5, 0.5, 0.7, 1.0],
            ]
        )
        assert np.array_equal(make_sigma(4, 2, "blockwise", (0.3, 0.5, 0.7)), expected)

    def test_positive_definite_at_benchmark_sizes(self):
        for p in (200, 500, 1000, 2000):
            sigma = make_sigma(p, 10, "blockwise", (0.3, 0.5, 0.7))
            assert np.linalg.eigvalsh(sigma)[0] > 0.0

    def test_indefinite_combination_rejected(self):
        with pytest.raises(DataError):
            make_sigma(20, 10, "blockwise", (0.0, 0.99, 0.0))

    def test_d_bounds(self):
        with pytest.raises(DataError):
            make_sigma(5, 5, "blockwise")


class TestGenDataset:
    def test_balanced_exact_counts(self):
        sigma = np.eye(6)
        beta = np.zeros(6)
        beta[0] = 1.0
        ds = gen_dataset(sigma, beta, 100, "balanced", seed=0)
        assert int(ds.y.sum()) == 50
        assert ds.n == 100

    def test_imbalanced_exact_counts(self):
        sigma = np.eye(4)
        ds = gen_dataset(sigma, np.zeros(4), 100, "imbalanced", seed=1, n_pos=20)
        assert int(ds.y.sum()) == 20

    def test_same_seed_identical(self):
        sigma = make_sigma(10, 2, "blockwise")
        beta = np.zeros(10)
        beta[:2] = 1.0
        a = gen_dataset(sigma, beta, 40, "balanced", seed=7)
        b = gen_dataset(sigma, beta, 40, "balanced", seed=7)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.y, b.y)

    def test_null_model_label_mean(self):
        ds = gen_dataset(np.eye(3), np.zeros(3), 10_000, "none", seed=2)
        assert abs(ds.y.mean() - 0.5) < 0.1

    def test_unreachable_target_errors(self):
        # budget smaller than the sample count can never fill the quotas
        sigma = np.eye(2)
        with pytest.raises(DataError, match="draws"):
            gen_dataset(sigma, np.zeros(2), 100, "balanced", seed=3, max_draws=50)


class TestRunScenario:
    def test_single_replication_shape(self):
        table = run_scenario(small_scenario(replications=1))
        assert len(table.rows) == 2
        assert {r.method for r in table.rows} == {"wlogit", "lasso"}
        assert len(table.aggregates) == 2

    def test_deterministic_tables(self):
        cfg = small_scenario()
        t1 = run_scenario(cfg)
        t2 = run_scenario(cfg)
        assert t1.rows_csv() == t2.rows_csv()
        assert t1.aggregates_csv() == t2.aggregates_csv()

    def test_parallel_matches_sequential(self):
        cfg = small_scenario(replications=3)
        seq = run_scenario(cfg, threads=1)
        par = run_scenario(cfg, threads=2)
        assert seq.rows_csv() == par.rows_csv()
        assert seq.aggregates_csv() == par.aggregates_csv()

    def test_aggregate_means_are_exact(self):
        table = run_scenario(small_scenario(replications=3))
        for agg in table.aggregates:
            rows = [
                r for r in table.rows
                if r.method == agg.method and r.error is None
            ]
            assert agg.n == len(rows)
            assert agg.tpr_mean == pytest.approx(np.mean([r.tpr for r in rows]), abs=1e-12)
            assert agg.auc_mean == pytest.approx(np.mean([r.auc for r in rows]), abs=1e-12)

    def test_wlogit_always_selects_something(self):
        table = run_scenario(small_scenario(replications=3))
        for r in table.rows:
            if r.method == "wlogit" and r.error is None:
                assert r.selected_count >= 0
                assert np.isfinite(r.tpr)

    def test_csv_header(self):
        table = run_scenario(small_scenario(replications=1))
        assert table.rows_csv().splitlines()[0] == (
            "method,scenario,replication,tpr,fpr,auc,selected_count,seed"
        )


class TestLassoCv:
    def test_returns_support_and_lambda(self):
        sigma = np.eye(15)
        beta = np.zeros(15)
        beta[:3] = 2.0
        ds = gen_dataset(sigma, beta, 80, "balanced", seed=5)
        fit, lam = lasso_cv(ds, folds=5, seed=0)
        assert lam > 0
        assert fit.beta.shape == (15,)

    def test_one_se_rule_never_less_sparse_than_min(self):
        sigma = np.eye(12)
        beta = np.zeros(12)
        beta[:2] = 1.5
        ds = gen_dataset(sigma, beta, 70, "balanced", seed=6)
        _, lam_min = lasso_cv(ds, folds=5, seed=1, rule="min")
        _, lam_1se = lasso_cv(ds, folds=5, seed=1, rule="1se")
        assert lam_1se >= lam_min

    def test_unknown_rule(self):
        ds = gen_dataset(np.eye(3), np.zeros(3), 20, "balanced", seed=7)
        with pytest.raises(DataError):
            lasso_cv(ds, rule="2se")


class TestKfoldCvAuc:
    def test_stratified_fold_sizes(self):
        sigma = np.eye(5)
        ds = gen_dataset(sigma, np.zeros(5), 100, "balanced", seed=8)
        seen = np.zeros(100)

        def fitter(train):
            # training split must hold exactly 90 samples, 45 per class
            assert train.n == 90
            assert int(train.y.sum()) == 45
            return lambda x_new: np.zeros(len(x_new))

        result = kfold_cv_auc(ds, 10, method=fitter, seed=0)
        assert isinstance(result, CvResult)
        assert len(result.fold_aucs) == 10

    def test_constant_scorer_pools_to_half(self):
        sigma = np.eye(4)
        ds = gen_dataset(sigma, np.zeros(4), 60, "balanced", seed=9)
        result = kfold_cv_auc(ds, 5, method=lambda tr: (lambda x: np.zeros(len(x))), seed=1)
        assert result.pooled_auc == 0.5

    def test_separable_data_scores_high(self):
        rng = default_rng(10)
        x = np.vstack([rng.standard_normal((30, 3)) + 3.0, rng.standard_normal((30, 3)) - 3.0])
        y = np.concatenate([np.ones(30), np.zeros(30)])
        result = kfold_cv_auc(Dataset(x, y), 5, method="wlogit", seed=2)
        assert result.pooled_auc >= 0.95

    def test_k_bounds(self):
        ds = gen_dataset(np.eye(3), np.zeros(3), 20, "balanced", seed=11)
        with pytest.raises(DataError):
            kfold_cv_auc(ds, 1)


class TestRocPoints:
    def test_endpoints(self):
        pts = roc_points(np.array([0.9, 0.1, 0.8, 0.2]), np.array([1, 0, 1, 0]))
        assert np.array_equal(pts[0], [0.0, 0.0])
        assert np.array_equal(pts[-1], [1.0, 1.0])

    def test_perfect_curve_passes_corner(self):
        pts = roc_points(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0]))
        assert any(np.array_equal(p, [0.0, 1.0]) for p in pts)
