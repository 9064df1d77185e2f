import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesbin import gp

from oracles import dense_gp, dense_lml


def random_set(rng, n, d):
    return rng.random((n, d)), rng.normal(size=n)


class TestKernel:
    def test_same_point(self):
        assert gp.se_kernel([0.3, 0.4], [0.3, 0.4], 0.2) == 1.0

    def test_distance_theta_sqrt2(self):
        theta = 0.37
        xj = [theta * math.sqrt(2), 0.0]
        assert gp.se_kernel([0.0, 0.0], xj, theta) == pytest.approx(math.exp(-1), rel=1e-12)
        assert math.exp(-1) == pytest.approx(0.367879, abs=1e-6)

    def test_far(self):
        assert gp.se_kernel([0.0], [1e3], 0.5) == 0.0

    @pytest.mark.parametrize("theta", [0, -1])
    def test_bad_theta(self, theta):
        with pytest.raises(ValueError):
            gp.se_kernel([0], [1], theta)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            gp.se_kernel([0, 1], [1], 1.0)

    def test_matrix_symmetric_unit_diagonal(self):
        X = np.random.default_rng(0).random((7, 3))
        K = gp.kernel_matrix(X, X, 0.3)
        np.testing.assert_array_equal(K, K.T)
        np.testing.assert_array_equal(np.diag(K), 1.0)


class TestFit:
    def test_single_point(self):
        m = gp.fit([[0.2, 0.8]], [5.0], theta=0.3)
        post = gp.predict(m, [0.2, 0.8])
        assert post.mean == pytest.approx(5.0)
        assert post.variance <= m.jitter

    def test_two_point_closed_form(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0]])
        y = np.array([1.0, 4.0])
        q = np.array([0.5, 0.0])
        m = gp.fit(X, y, theta=1.0, jitter=0.0)
        # hand-solved 2x2 system: K = [[1, k], [k, 1]], K^-1 = [[1, -k], [-k, 1]] / (1 - k^2)
        k = math.exp(-0.5)
        kq = math.exp(-0.125)
        yc = (-1.5, 1.5)
        a = ((yc[0] - k * yc[1]) / (1 - k * k), (yc[1] - k * yc[0]) / (1 - k * k))
        mean = 2.5 + kq * a[0] + kq * a[1]
        var = 1 - (kq * kq * 2 - 2 * k * kq * kq) / (1 - k * k)
        post = gp.predict(m, q)
        assert post.mean == pytest.approx(mean, abs=1e-12)
        assert post.variance == pytest.approx(var, abs=1e-12)

    def test_duplicates_identical_y(self):
        m = gp.fit([[0.5, 0.5], [0.5, 0.5]], [1.0, 1.0], theta=0.2, jitter=1e-8)
        assert gp.predict(m, [0.5, 0.5]).mean == pytest.approx(1.0)

    def test_jitter_escalation(self):
        # jitter 0 cannot factor a singular matrix; the fit escalates
        m = gp.fit([[0.5], [0.5]], [1.0, 2.0], theta=0.2, jitter=0.0)
        assert m.jitter > 0

    def test_cholesky_reconstructs(self):
        X, y = random_set(np.random.default_rng(1), 12, 4)
        m = gp.fit(X, y, 0.4)
        K = gp.kernel_matrix(X, X, 0.4) + m.jitter * np.eye(12)
        np.testing.assert_allclose(m.chol @ m.chol.T, K, atol=1e-8)

    def test_rejects_outside_cube(self):
        with pytest.raises(ValueError):
            gp.fit([[1.5]], [0.0], 0.2)

    def test_factorization_failure(self):
        X = np.zeros((3, 1))
        # NaN inputs make every jitter level fail
        with pytest.raises((gp.GPModelError, ValueError)):
            gp.fit(X + np.nan, [0.0, 1.0, 2.0], 0.2)


class TestPredict:
    def test_interpolates(self):
        X, y = random_set(np.random.default_rng(2), 6, 2)
        m = gp.fit(X, y, 0.3, jitter=1e-12)
        mean, var = gp.predict_many(m, X)
        np.testing.assert_allclose(mean, y, atol=1e-6)
        assert (var <= 1e-6).all()

    def test_prior_far_away(self):
        X = np.array([[0.0, 0.0], [0.05, 0.0]])
        m = gp.fit(X, [3.0, 5.0], theta=0.05)
        post = gp.predict(m, [1.0, 1.0])
        assert post.mean == pytest.approx(4.0, abs=1e-9)
        assert post.variance == pytest.approx(1.0, abs=1e-9)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(3)
        X, y = random_set(rng, 5, 3)
        Q = rng.random((20, 3))
        m = gp.fit(X, y, 0.4)
        mean, var = gp.predict_many(m, Q)
        ref_mean, ref_var = dense_gp(X, y, Q, 0.4, m.jitter)
        np.testing.assert_allclose(mean, ref_mean, atol=1e-8)
        np.testing.assert_allclose(var, np.maximum(ref_var, 0), atol=1e-8)

    def test_dim_mismatch(self):
        m = gp.fit([[0.1, 0.2]], [0.0], 0.3)
        with pytest.raises(ValueError):
            gp.predict(m, [0.1, 0.2, 0.3])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 10), st.integers(1, 4), st.integers(0, 10_000))
    def test_permutation_invariant(self, n, d, seed):
        rng = np.random.default_rng(seed)
        X, y = random_set(rng, n, d)
        Q = rng.random((5, d))
        perm = rng.permutation(n)
        a = gp.predict_many(gp.fit(X, y, 0.3), Q)
        b = gp.predict_many(gp.fit(X[perm], y[perm], 0.3), Q)
        np.testing.assert_allclose(a[0], b[0], atol=1e-8)
        np.testing.assert_allclose(a[1], b[1], atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 15), st.integers(1, 6), st.sampled_from(gp.THETA_GRID[:4]), st.integers(0, 10_000))
    def test_variance_at_training_points(self, n, d, theta, seed):
        X, y = random_set(np.random.default_rng(seed), n, d)
        m = gp.fit(X, y, theta)
        assert m.jitter <= 1e-6
        _, var = gp.predict_many(m, X)
        assert (var <= 2 * m.jitter).all()
        assert (var >= 0).all()


class TestLikelihood:
    def test_single_point(self):
        m = gp.fit([[0.5]], [2.0], 0.3, jitter=1e-8)
        expected = -0.5 * math.log(2 * math.pi) - 0.5 * math.log(1 + 1e-8)
        assert gp.log_marginal_likelihood(m) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense(self, seed):
        X, y = random_set(np.random.default_rng(seed), 4, 3)
        m = gp.fit(X, y, 0.3)
        assert gp.log_marginal_likelihood(m) == pytest.approx(dense_lml(X, y, 0.3, m.jitter), abs=1e-8)

    def test_extra_interpolated_point_keeps_train_residuals_small(self):
        rng = np.random.default_rng(9)
        X, y = random_set(rng, 5, 2)
        m1 = gp.fit(X, y, 0.3, jitter=1e-12)
        x_new = rng.random((1, 2))
        y_new = gp.predict_many(m1, x_new)[0]
        X2, y2 = np.vstack([X, x_new]), np.concatenate([y, y_new])
        m2 = gp.fit(X2, y2, 0.3, jitter=1e-12)
        np.testing.assert_allclose(gp.predict_many(m2, X2)[0], y2, atol=1e-5)

    def test_fit_best_picks_max_lml(self):
        rng = np.random.default_rng(4)
        X = rng.random((12, 2))
        y = np.sin(3 * X[:, 0]) + X[:, 1]
        best = gp.fit_best(X, y)
        lmls = {t: gp.log_marginal_likelihood(gp.fit(X, y, t)) for t in gp.THETA_GRID}
        assert best.theta == max(lmls, key=lmls.get)

    def test_fit_profiled_scale(self):
        rng = np.random.default_rng(5)
        X = rng.random((10, 2))
        y = 50 * np.cos(2 * X[:, 0])
        m, scale = gp.fit_profiled(X, y)
        assert scale > 1
        np.testing.assert_allclose(scale * gp.predict_many(m, X)[0], y, atol=1e-3)
