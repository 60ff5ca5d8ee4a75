import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wlogit.errors import DataError
from wlogit.glm import (
    Dataset,
    lambda_grid,
    lasso_logistic,
    log_likelihood,
    standardize_columns,
)
from wlogit.linalg import (
    SqrtPair,
    default_rng,
    estimate_covariance,
    mv_normal_sample,
    sym_sqrt_pair,
)
from wlogit.pipeline import (
    FitConfig,
    PathPoint,
    WhiteningTransform,
    back_transform,
    build_whitening,
    fit,
    fit_beta_tilde,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
    select_cutoff,
    select_k,
    select_lambda,
    select_m,
    threshold_m,
    topk_correct,
    whiten,
)


def identity_transform(n, p):
    eye = np.eye(p)
    return WhiteningTransform(
        eye.copy(), SqrtPair(eye.copy(), eye.copy(), 0), np.ones(n), np.zeros(p)
    )


def logistic_dataset(seed, n=60, p=8, active=2, effect=1.5):
    rng = default_rng(seed)
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:active] = effect
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-(x @ beta)))).astype(float)
    if y.min() == y.max():
        return logistic_dataset(seed + 1000, n, p, active, effect)
    return Dataset(x, y)


coeff_vectors = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=1, max_size=12
).map(lambda v: np.array(v))


class TestFitConfig:
    def test_gamma_bounds(self):
        with pytest.raises(DataError):
            FitConfig(gamma=1.0)

    def test_literal_alias(self):
        assert FitConfig(h_convention="literal").h_convention == "odds"

    def test_unknown_convention(self):
        with pytest.raises(DataError):
            FitConfig(h_convention="probit")


class TestBuildWhitening:
    def test_forced_zero_ridge_fisher(self):
        ds = logistic_dataset(0, n=30, p=5)
        xs, _, _ = standardize_columns(ds.X)
        work = Dataset(xs, ds.y)
        tr = build_whitening(work, beta_ridge=np.zeros(5))
        assert np.allclose(tr.h_diag, 0.25)
        expected = estimate_covariance(xs / 2.0, "shrinkage")
        assert np.abs(tr.sigma_check - expected).max() < 1e-12

    def test_forced_zero_ridge_literal_gives_unit_weights(self):
        ds = logistic_dataset(1, n=30, p=5)
        tr = build_whitening(ds, h_convention="literal", beta_ridge=np.zeros(5))
        assert np.allclose(tr.h_diag, 1.0)

    def test_uncentered_moment_matches_on_centered_data(self):
        # with constant weights and centered columns the two estimates agree
        ds = logistic_dataset(2, n=40, p=6)
        xs, _, _ = standardize_columns(ds.X)
        work = Dataset(xs, ds.y)
        a = build_whitening(work, beta_ridge=np.zeros(6), center=True)
        b = build_whitening(work, beta_ridge=np.zeros(6), center=False)
        assert np.abs(a.sigma_check - b.sigma_check).max() < 1e-10


class TestWhiten:
    def test_identity(self):
        ds = logistic_dataset(3)
        tr = identity_transform(ds.n, ds.p)
        assert np.array_equal(whiten(ds.X, tr), ds.X)

    def test_diagonal_scaling(self):
        x = default_rng(4).standard_normal((10, 2))
        pair = sym_sqrt_pair(np.diag([4.0, 1.0]))
        tr = WhiteningTransform(np.diag([4.0, 1.0]), pair, np.ones(10), np.zeros(2))
        xt = whiten(x, tr)
        assert np.allclose(xt[:, 0], x[:, 0] / 2.0)
        assert np.allclose(xt[:, 1], x[:, 1])

    def test_roundtrip(self):
        rng = default_rng(5)
        x = rng.standard_normal((12, 3))
        a = rng.standard_normal((20, 3))
        sigma = a.T @ a / 20 + 0.2 * np.eye(3)
        tr = WhiteningTransform(sigma, sym_sqrt_pair(sigma), np.ones(12), np.zeros(3))
        assert np.abs(whiten(x, tr) @ tr.pair.sqrt - x).max() < 1e-8

    def test_dimension_mismatch(self):
        tr = identity_transform(5, 3)
        with pytest.raises(DataError):
            whiten(np.zeros((5, 4)), tr)


class TestFitBetaTilde:
    def test_identity_transform_equals_lasso(self):
        ds = logistic_dataset(6, n=50, p=10, active=3)
        tr = identity_transform(ds.n, ds.p)
        lam = 0.05
        tilde = fit_beta_tilde(ds, tr, lam, tol=1e-8, beta_tilde_init=np.zeros(ds.p))
        plain = lasso_logistic(ds, lam, tol=1e-8, standardize=False)
        assert np.abs(tilde.beta_tilde - plain.beta).max() < 1e-8

    def test_large_lambda_nulls_out(self):
        ds = logistic_dataset(7, n=40, p=6)
        xs, _, _ = standardize_columns(ds.X)
        work = Dataset(xs, ds.y)
        tr = build_whitening(work)
        xt = whiten(work.X, tr)
        lam_max = float(np.abs(xt.T @ (work.y - work.y.mean())).max()) / work.n
        tilde = fit_beta_tilde(work, tr, lam_max * 1.001)
        assert np.count_nonzero(tilde.beta_tilde) == 0

    def test_objective_beats_random_perturbations(self):
        ds = logistic_dataset(8, n=40, p=5, active=2)
        xs, _, _ = standardize_columns(ds.X)
        work = Dataset(xs, ds.y)
        tr = build_whitening(work)
        xt = whiten(work.X, tr)
        lam = 0.08
        tilde = fit_beta_tilde(work, tr, lam, tol=1e-10, maxit=300, cd_maxit=50_000)

        def objective(bt):
            eta = xt @ bt
            nll = -float(np.mean(work.y * eta - np.logaddexp(0.0, eta)))
            return nll + lam * float(np.abs(bt).sum())

        base = objective(tilde.beta_tilde)
        rng = default_rng(99)
        scales = np.repeat([1e-3, 1e-2, 1e-1, 1.0], 2500)
        perturbed = tilde.beta_tilde + rng.standard_normal((10_000, 5)) * scales[:, None]
        vals = np.array([objective(b) for b in perturbed])
        assert base <= vals.min() + 1e-12


class TestTopkCorrect:
    def test_k_equals_p_is_identity(self):
        v = np.array([3.0, -2.0, 0.5])
        assert np.array_equal(topk_correct(v, 3), v)

    def test_plateau_with_sign(self):
        v = np.array([3.0, -2.0, 0.5])
        assert np.allclose(topk_correct(v, 2), [3.0, -2.0, 2.0])
        assert np.allclose(topk_correct(v, 1), [3.0, -3.0, 3.0])

    def test_unsigned_variant(self):
        v = np.array([3.0, -2.0, 0.5])
        assert np.allclose(topk_correct(v, 1, signed=False), [3.0, 3.0, 3.0])

    def test_zero_treated_as_positive(self):
        v = np.array([2.0, 0.0, -1.0])
        out = topk_correct(v, 1)
        assert out[1] == 2.0

    def test_out_of_range(self):
        with pytest.raises(DataError):
            topk_correct(np.ones(3), 0)
        with pytest.raises(DataError):
            topk_correct(np.ones(3), 4)

    @settings(max_examples=60, deadline=None)
    @given(coeff_vectors, st.data())
    def test_idempotent(self, v, data):
        k = data.draw(st.integers(min_value=1, max_value=len(v)))
        once = topk_correct(v, k)
        assert np.array_equal(topk_correct(once, k), once)


class TestSelectCutoff:
    def test_knee_example(self):
        assert select_cutoff([100.0, 60.0, 59.5, 59.4], 0.95) == 2

    def test_constant_sequence(self):
        assert select_cutoff([5.0, 5.0, 5.0], 0.95) == 1

    def test_geometric_decay_falls_through(self):
        nll = [8.0, 4.0, 2.0, 1.0]
        assert select_cutoff(nll, 0.95) == 4

    def test_single_entry(self):
        assert select_cutoff([1.0], 0.5) == 1

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            select_cutoff([], 0.9)

    def test_gamma_bounds(self):
        with pytest.raises(DataError):
            select_cutoff([1.0, 2.0], 1.0)

    def test_literal_mode_stops_immediately_on_improvement(self):
        # decreasing NLL means the inverted ratio is >= 1 at the first step
        assert select_cutoff([100.0, 60.0, 59.5], 0.95, literal_ratio=True) == 1


class TestSelectK:
    def test_tiny_gamma_picks_one(self):
        ds = logistic_dataset(9, n=30, p=6)
        tr = identity_transform(ds.n, ds.p)
        k_hat, _, _ = select_k(ds, tr, np.array([3.0, 1.0, 0.2, 0.1, 0.05, 0.01]), 1e-9)
        assert k_hat == 1

    def test_identical_components_pick_one(self):
        ds = logistic_dataset(10, n=30, p=4)
        tr = identity_transform(ds.n, ds.p)
        k_hat, corrected, nll = select_k(ds, tr, np.full(4, 0.7), 0.95)
        assert k_hat == 1
        assert np.allclose(corrected, 0.7)
        assert np.abs(np.diff(nll)).max() < 1e-12

    def test_dominant_component_keeps_k_small(self):
        hits = 0
        for seed in range(20):
            rng = default_rng(200 + seed)
            x = rng.standard_normal((80, 8))
            beta = np.zeros(8)
            beta[0] = 2.0
            y = (rng.random(80) < 1.0 / (1.0 + np.exp(-(x @ beta)))).astype(float)
            if y.min() == y.max():
                continue
            ds = Dataset(x, y)
            tr = identity_transform(80, 8)
            bt0 = np.array([1.8, 0.02, -0.01, 0.015, -0.02, 0.01, 0.0, -0.005])
            k_hat, _, _ = select_k(ds, tr, bt0, 0.95)
            hits += k_hat <= 3
        assert hits >= 14


class TestBackTransform:
    def test_identity(self):
        tr = identity_transform(4, 3)
        v = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(back_transform(v, tr), v)

    def test_diagonal(self):
        pair = sym_sqrt_pair(np.diag([4.0, 1.0]))
        tr = WhiteningTransform(np.diag([4.0, 1.0]), pair, np.ones(3), np.zeros(2))
        assert np.allclose(back_transform(np.array([2.0, 3.0]), tr), [1.0, 3.0])

    def test_roundtrip(self):
        rng = default_rng(11)
        a = rng.standard_normal((20, 4))
        sigma = a.T @ a / 20 + 0.3 * np.eye(4)
        tr = WhiteningTransform(sigma, sym_sqrt_pair(sigma), np.ones(5), np.zeros(4))
        v = rng.standard_normal(4)
        assert np.abs(back_transform(tr.pair.sqrt @ v, tr) - v).max() < 1e-8


class TestThresholdM:
    def test_m_equals_p(self):
        v = np.array([0.9, -0.1, 0.05])
        assert np.array_equal(threshold_m(v, 3), v)

    def test_keep_one_and_two(self):
        v = np.array([0.9, -0.1, 0.05])
        assert np.allclose(threshold_m(v, 1), [0.9, 0.0, 0.0])
        assert np.allclose(threshold_m(v, 2), [0.9, -0.1, 0.0])

    @settings(max_examples=60, deadline=None)
    @given(coeff_vectors, st.data())
    def test_idempotent_and_support_bounded(self, v, data):
        m = data.draw(st.integers(min_value=1, max_value=len(v)))
        out = threshold_m(v, m)
        assert np.array_equal(threshold_m(out, m), out)
        assert np.count_nonzero(out) <= m
        if np.count_nonzero(v) >= m:
            assert np.count_nonzero(out) == m


class TestSelectM:
    def test_recovers_sparse_well_separated(self):
        hits = 0
        for seed in range(20):
            rng = default_rng(300 + seed)
            x = rng.standard_normal((120, 30))
            beta = np.zeros(30)
            beta[:3] = 2.0
            y = (rng.random(120) < 1.0 / (1.0 + np.exp(-(x @ beta)))).astype(float)
            if y.min() == y.max():
                continue
            ds = Dataset(x, y)
            beta0 = np.zeros(30)
            beta0[:3] = 2.0
            beta0[3:] = rng.standard_normal(27) * 0.01
            m_hat, beta_hat, _ = select_m(ds, beta0, 0.95)
            if m_hat == 3 and set(np.flatnonzero(beta_hat)) == {0, 1, 2}:
                hits += 1
        assert hits >= 14

    def test_tiny_gamma_picks_one(self):
        ds = logistic_dataset(12, n=30, p=5)
        m_hat, _, _ = select_m(ds, np.array([1.0, 0.5, 0.2, 0.1, 0.05]), 1e-9)
        assert m_hat == 1

    def test_all_zero_vector(self):
        ds = logistic_dataset(13, n=30, p=5)
        m_hat, beta_hat, _ = select_m(ds, np.zeros(5), 0.95)
        assert m_hat == 1
        assert np.count_nonzero(beta_hat) == 0


class TestSelectLambda:
    def test_single_candidate(self):
        cands = [PathPoint(0.1, np.array([1.0, 0.0]), -0.5)]
        assert select_lambda(cands) == 0

    def test_tie_prefers_parsimonious(self):
        cands = [
            PathPoint(0.3, np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]), -0.5),
            PathPoint(0.2, np.ones(7), -0.3),
            PathPoint(0.1, np.array([1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), -0.3),
        ]
        assert select_lambda(cands) == 2

    def test_strict_argmax(self):
        cands = [
            PathPoint(0.3, np.ones(2), -0.9),
            PathPoint(0.2, np.ones(2), -0.2),
            PathPoint(0.1, np.ones(2), -0.4),
        ]
        assert select_lambda(cands) == 1

    def test_remaining_tie_prefers_larger_lambda(self):
        cands = [
            PathPoint(0.3, np.array([1.0, 0.0]), -0.3),
            PathPoint(0.1, np.array([0.0, 1.0]), -0.3),
        ]
        assert select_lambda(cands) == 0

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            select_lambda([])


class TestFit:
    def test_degenerate_single_feature(self):
        rng = default_rng(14)
        x = rng.standard_normal((40, 1))
        y = (rng.random(40) < 1.0 / (1.0 + np.exp(-(2.0 * x[:, 0])))).astype(float)
        model = fit(Dataset(x, y))
        assert set(model.support.tolist()) <= {0}
        assert np.isfinite(model.loglik)
        assert model.m_hat == 1

    def test_single_active_feature_identity_design(self):
        hits = 0
        for seed in range(20):
            sigma = np.eye(10)
            x = mv_normal_sample(sigma, 200, seed=400 + seed)
            beta = np.zeros(10)
            beta[0] = 2.0
            rng = default_rng(800 + seed)
            y = (rng.random(200) < 1.0 / (1.0 + np.exp(-(x @ beta)))).astype(float)
            model = fit(Dataset(x, y))
            hits += 0 in set(model.support.tolist())
        assert hits >= 18

    def test_loglik_field_matches_model(self):
        ds = logistic_dataset(15, n=60, p=10, active=3)
        model = fit(ds)
        xs, means, sds = standardize_columns(ds.X)
        assert model.loglik == pytest.approx(
            log_likelihood(Dataset(xs, ds.y), model.beta_hat), abs=1e-12
        )
        assert np.array_equal(model.support, np.flatnonzero(model.beta_hat))

    def test_whitened_likelihood_equivalence(self):
        ds = logistic_dataset(16, n=50, p=7)
        xs, _, _ = standardize_columns(ds.X)
        work = Dataset(xs, ds.y)
        tr = build_whitening(work)
        xt = whiten(work.X, tr)
        rng = default_rng(17)
        for _ in range(5):
            bt = rng.standard_normal(7)
            eta = xt @ bt
            l_wt = float(np.mean(work.y * eta - np.logaddexp(0.0, eta)))
            l_orig = log_likelihood(work, tr.pair.inv_sqrt @ bt)
            assert abs(l_wt - l_orig) <= 1e-10

    def test_change_of_variables_consistency(self):
        ds = logistic_dataset(18, n=40, p=6)
        tr = build_whitening(ds)
        xt = whiten(ds.X, tr)
        rng = default_rng(19)
        bt = rng.standard_normal(6)
        assert np.abs(xt @ bt - ds.X @ (tr.pair.inv_sqrt @ bt)).max() <= 1e-10


class TestPredict:
    def test_zero_model_boundary_labels(self):
        ds = logistic_dataset(20, n=30, p=4)
        model = fit(ds)
        model.beta_hat = np.zeros(4)
        probs, labels = predict(model, ds.X)
        assert np.allclose(probs, 0.5)
        assert np.all(labels == 1)  # boundary rule: >= threshold

    def test_training_probabilities_deterministic(self):
        ds = logistic_dataset(21, n=50, p=8, active=3)
        model = fit(ds)
        p1, _ = predict(model, ds.X)
        p2, _ = predict(model, ds.X)
        assert np.array_equal(p1, p2)

    def test_separable_training_auc(self):
        from wlogit.diagnostics import auc

        rng = default_rng(22)
        x = np.vstack([rng.standard_normal((25, 3)) + 4.0, rng.standard_normal((25, 3)) - 4.0])
        y = np.concatenate([np.ones(25), np.zeros(25)])
        model = fit(Dataset(x, y))
        probs, _ = predict(model, x)
        assert auc(probs, y) == 1.0

    def test_dimension_check(self):
        ds = logistic_dataset(23)
        model = fit(ds)
        with pytest.raises(DataError):
            predict(model, np.zeros((3, ds.p + 1)))


class TestSerialization:
    def test_roundtrip_bit_exact(self, tmp_path):
        ds = logistic_dataset(24, n=60, p=9, active=3)
        model = fit(ds)
        model.feature_names = [f"g{i}" for i in range(9)]
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.beta_hat, model.beta_hat)
        assert np.array_equal(loaded.beta_tilde_hat, model.beta_tilde_hat)
        assert np.array_equal(loaded.beta_tilde_raw, model.beta_tilde_raw)
        assert loaded.lambda_hat == model.lambda_hat
        assert loaded.loglik == model.loglik
        assert (loaded.k_hat, loaded.m_hat, loaded.gamma) == (
            model.k_hat, model.m_hat, model.gamma,
        )
        assert np.array_equal(loaded.support, model.support)
        assert np.array_equal(loaded.means, model.means)
        assert np.array_equal(loaded.sds, model.sds)
        assert loaded.feature_names == model.feature_names
        assert loaded.h_convention == model.h_convention

    def test_loaded_model_predicts_identically(self, tmp_path):
        ds = logistic_dataset(25, n=50, p=6, active=2)
        model = fit(ds)
        save_model(model, tmp_path / "m.json")
        loaded = load_model(tmp_path / "m.json")
        xnew = default_rng(26).standard_normal((20, 6))
        assert np.array_equal(predict(model, xnew)[0], predict(loaded, xnew)[0])

    def test_rejects_foreign_document(self):
        with pytest.raises(DataError):
            model_from_dict({"format": "something-else", "version": 1})

    def test_rejects_future_version(self):
        ds = logistic_dataset(27, n=30, p=4)
        doc = model_to_dict(fit(ds))
        doc["version"] = 99
        with pytest.raises(DataError):
            model_from_dict(doc)
