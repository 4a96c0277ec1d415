"""Gaussian density and mixture algebra.

Closed-form conjugate updates are checked against hand-derived values,
moment matching against direct weighted sums, and the reduction loop
against structural guarantees (component budget, weight preservation).
"""

import numpy as np
import pytest

from bpmtf.errors import DomainError, NumericalError
from bpmtf.gaussians import (
    GaussianDensity,
    GaussianMixture,
    gaussian_logpdf,
    kalman_predict,
    kalman_update,
    merge_moment_matched,
    mixture_moments,
    mixture_reduce,
    symmetrized_kl,
)


class TestDensity:
    def test_logpdf_standard_normal(self):
        """log N(0; 0, 1) = -0.5 log(2 pi)."""
        d = GaussianDensity(np.zeros(1), np.eye(1))
        assert gaussian_logpdf(np.zeros(1), d) == pytest.approx(-0.5 * np.log(2 * np.pi))

    def test_logpdf_matches_quadratic_form(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            dim = int(rng.integers(1, 5))
            a = rng.normal(size=(dim, dim))
            cov = a @ a.T + dim * np.eye(dim)
            mean = rng.normal(size=dim)
            x = rng.normal(size=dim)
            d = GaussianDensity(mean, cov)
            diff = x - mean
            expected = -0.5 * (
                dim * np.log(2 * np.pi)
                + np.linalg.slogdet(cov)[1]
                + diff @ np.linalg.solve(cov, diff)
            )
            np.testing.assert_allclose(gaussian_logpdf(x, d), expected, rtol=1e-10)

    def test_non_positive_definite_cov_rejected(self):
        with pytest.raises(NumericalError):
            d = GaussianDensity(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
            gaussian_logpdf(np.zeros(2), d)


class TestKalman:
    def test_scalar_conjugate_update(self):
        """Prior N(0,1), observation 1 with unit noise: posterior N(0.5, 0.5),
        predictive likelihood N(1; 0, 2)."""
        prior = GaussianDensity(np.zeros(1), np.eye(1))
        post, like = kalman_update(prior, np.array([1.0]), np.eye(1), np.eye(1))
        np.testing.assert_allclose(post.mean, [0.5], atol=1e-12)
        np.testing.assert_allclose(post.cov, [[0.5]], atol=1e-12)
        assert like == pytest.approx(np.exp(-0.25) / np.sqrt(4 * np.pi), rel=1e-12)

    def test_predict_scalar_cases(self):
        d = GaussianDensity(np.zeros(1), np.eye(1))
        same = kalman_predict(d, np.eye(1), np.zeros((1, 1)))
        np.testing.assert_allclose(same.mean, [0.0], atol=1e-15)
        np.testing.assert_allclose(same.cov, [[1.0]], atol=1e-15)
        wider = kalman_predict(d, np.eye(1), np.eye(1))
        np.testing.assert_allclose(wider.cov, [[2.0]], atol=1e-15)

    def test_uninformative_measurement(self):
        """Huge observation noise leaves the prior mean essentially alone."""
        prior = GaussianDensity(np.array([3.0]), np.array([[2.0]]))
        post, _ = kalman_update(prior, np.array([100.0]), np.eye(1), np.array([[1e12]]))
        assert abs(post.mean[0] - 3.0) < 1e-6

    def test_update_matches_grid_bayes_rule(self):
        """Random 4D diagonal instance decouples per axis; each measured
        axis posterior must match trapezoid-grid Bayes-rule moments."""
        rng = np.random.default_rng(417)
        for _ in range(5):
            pvar = rng.uniform(0.5, 2.0, size=4)
            prior = GaussianDensity(rng.normal(size=4), np.diag(pvar))
            rvar = rng.uniform(0.3, 1.5, size=2)
            obs = np.eye(4)[:2]
            z = rng.normal(size=2)
            post, _ = kalman_update(prior, z, obs, np.diag(rvar))
            for axis in range(2):
                xs = np.linspace(-12, 12, 20001)
                dens = np.exp(
                    -0.5 * (xs - prior.mean[axis]) ** 2 / pvar[axis]
                ) * np.exp(-0.5 * (z[axis] - xs) ** 2 / rvar[axis])
                dens /= np.trapezoid(dens, xs)
                mean = np.trapezoid(xs * dens, xs)
                var = np.trapezoid((xs - mean) ** 2 * dens, xs)
                assert post.mean[axis] == pytest.approx(mean, abs=1e-6)
                assert post.cov[axis, axis] == pytest.approx(var, abs=1e-6)
            for axis in (2, 3):
                assert post.mean[axis] == pytest.approx(prior.mean[axis], abs=1e-12)

    def test_likelihood_normalizes_over_measurements(self):
        """The returned scalar is a density in z: it integrates to one."""
        prior = GaussianDensity(np.array([0.7]), np.array([[1.3]]))
        zs = np.linspace(-20, 20, 4001)
        vals = [kalman_update(prior, np.array([z]), np.eye(1), np.array([[0.6]]))[1] for z in zs]
        assert np.trapezoid(vals, zs) == pytest.approx(1.0, abs=1e-6)

    def test_predict_moments(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            dim = int(rng.integers(1, 4))
            a = rng.normal(size=(dim, dim))
            cov = a @ a.T + np.eye(dim)
            trans = rng.normal(size=(dim, dim))
            b = rng.normal(size=(dim, dim))
            noise = b @ b.T + 0.1 * np.eye(dim)
            d = GaussianDensity(rng.normal(size=dim), cov)
            out = kalman_predict(d, trans, noise)
            np.testing.assert_allclose(out.mean, trans @ d.mean, atol=1e-12)
            np.testing.assert_allclose(out.cov, trans @ cov @ trans.T + noise, atol=1e-10)

    def test_update_is_bayes_rule(self):
        """Posterior from the filter equals the normalized product density:
        precision adds, precision-weighted means add."""
        rng = np.random.default_rng(99)
        for _ in range(30):
            dim = int(rng.integers(1, 4))
            a = rng.normal(size=(dim, dim))
            cov = a @ a.T + np.eye(dim)
            prior = GaussianDensity(rng.normal(size=dim), cov)
            obs = np.eye(dim)
            b = rng.normal(size=(dim, dim))
            rnoise = b @ b.T + 0.5 * np.eye(dim)
            z = rng.normal(size=dim)
            post, like = kalman_update(prior, z, obs, rnoise)
            prec = np.linalg.inv(cov) + np.linalg.inv(rnoise)
            expect_cov = np.linalg.inv(prec)
            expect_mean = expect_cov @ (
                np.linalg.solve(cov, prior.mean) + np.linalg.solve(rnoise, z)
            )
            np.testing.assert_allclose(post.mean, expect_mean, atol=1e-9)
            np.testing.assert_allclose(post.cov, expect_cov, atol=1e-9)
            pred = GaussianDensity(obs @ prior.mean, obs @ cov @ obs.T + rnoise)
            assert like == pytest.approx(np.exp(gaussian_logpdf(z, pred)), rel=1e-9)

    def test_posterior_cov_symmetric(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.normal(size=(3, 3))
            prior = GaussianDensity(rng.normal(size=3), a @ a.T + np.eye(3))
            obs = rng.normal(size=(2, 3))
            post, _ = kalman_update(prior, rng.normal(size=2), obs, np.eye(2))
            np.testing.assert_allclose(post.cov, post.cov.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(post.cov) > 0)


class TestMixture:
    def _random_mixture(self, rng, size, dim):
        comps = []
        for _ in range(size):
            a = rng.normal(size=(dim, dim))
            comps.append(GaussianDensity(rng.normal(size=dim), a @ a.T + np.eye(dim)))
        return GaussianMixture(rng.uniform(0.1, 1.0, size=size), comps)

    def test_moments_match_weighted_sums(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            m = self._random_mixture(rng, int(rng.integers(1, 6)), 2)
            mean, cov = mixture_moments(m)
            w = m.weights / m.weights.sum()
            expect_mean = sum(wi * c.mean for wi, c in zip(w, m.components))
            expect_cov = sum(
                wi * (c.cov + np.outer(c.mean - expect_mean, c.mean - expect_mean))
                for wi, c in zip(w, m.components)
            )
            np.testing.assert_allclose(mean, expect_mean, atol=1e-12)
            np.testing.assert_allclose(cov, expect_cov, atol=1e-12)

    def test_two_point_mixture_moments(self):
        """Equal weights on N(-1,1), N(+1,1): mean 0, variance 2."""
        m = GaussianMixture(
            np.array([0.5, 0.5]),
            [
                GaussianDensity(np.array([-1.0]), np.eye(1)),
                GaussianDensity(np.array([1.0]), np.eye(1)),
            ],
        )
        mean, cov = mixture_moments(m)
        np.testing.assert_allclose(mean, [0.0], atol=1e-15)
        np.testing.assert_allclose(cov, [[2.0]], atol=1e-15)

    def test_moments_against_sampling(self):
        """Mixture moments agree with Monte Carlo within 3 sigma."""
        rng = np.random.default_rng(2024)
        m = self._random_mixture(rng, 4, 2)
        mean, cov = mixture_moments(m)
        w = m.weights / m.weights.sum()
        n_draws = 200000
        counts = rng.multinomial(n_draws, w)
        draws = np.concatenate([
            rng.multivariate_normal(c.mean, c.cov, size=k)
            for c, k in zip(m.components, counts) if k
        ])
        se = np.sqrt(np.diag(cov) / n_draws)
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 3 * se)

    def test_normalized_and_scaled(self):
        rng = np.random.default_rng(5)
        m = self._random_mixture(rng, 4, 2)
        assert m.normalized().total_weight() == pytest.approx(1.0, abs=1e-12)
        assert m.scaled(2.5).total_weight() == pytest.approx(2.5 * m.total_weight())

    def test_merge_two_equals_moments(self):
        """Pairwise moment-matched merge of the whole mixture equals the
        global moment match."""
        rng = np.random.default_rng(11)
        m = self._random_mixture(rng, 2, 3)
        w, merged = merge_moment_matched(m.weights, m.components)
        mean, cov = mixture_moments(m)
        assert w == pytest.approx(m.total_weight())
        np.testing.assert_allclose(merged.mean, mean, atol=1e-12)
        np.testing.assert_allclose(merged.cov, cov, atol=1e-12)


class TestSymmetrizedKl:
    def test_zero_iff_equal(self):
        d = GaussianDensity(np.array([1.0, -2.0]), np.diag([2.0, 3.0]))
        assert symmetrized_kl(d, d) == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_and_positive(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            a = rng.normal(size=(2, 2))
            b = rng.normal(size=(2, 2))
            da = GaussianDensity(rng.normal(size=2), a @ a.T + np.eye(2))
            db = GaussianDensity(rng.normal(size=2), b @ b.T + np.eye(2))
            lhs = symmetrized_kl(da, db)
            assert lhs == pytest.approx(symmetrized_kl(db, da), rel=1e-10)
            assert lhs > 0

    def test_scalar_closed_form(self):
        """For N(m1,v) vs N(m2,v) the divergence is (m1-m2)^2 / v."""
        da = GaussianDensity(np.array([0.0]), np.array([[2.0]]))
        db = GaussianDensity(np.array([3.0]), np.array([[2.0]]))
        assert symmetrized_kl(da, db) == pytest.approx(9.0 / 2.0, rel=1e-12)


class TestReduce:
    def _random_mixture(self, rng, size, dim=2):
        comps = []
        for _ in range(size):
            a = 0.3 * rng.normal(size=(dim, dim))
            comps.append(GaussianDensity(rng.normal(size=dim), a @ a.T + np.eye(dim)))
        return GaussianMixture(rng.uniform(0.1, 1.0, size=size), comps)

    def test_budget_respected_and_weight_preserved(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            m = self._random_mixture(rng, int(rng.integers(1, 9)))
            cap = int(rng.integers(1, 5))
            out = mixture_reduce(m, cap)
            assert out.size <= cap
            assert out.total_weight() == pytest.approx(m.total_weight(), rel=1e-10)

    def test_reduction_to_one_is_global_moment_match(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            m = self._random_mixture(rng, int(rng.integers(2, 7)))
            out = mixture_reduce(m, 1)
            assert out.size == 1
            mean, cov = mixture_moments(m)
            np.testing.assert_allclose(out.components[0].mean, mean, atol=1e-9)
            np.testing.assert_allclose(out.components[0].cov, cov, atol=1e-9)

    def test_identical_pair_collapses_cleanly(self):
        d = GaussianDensity(np.array([1.0, 2.0]), np.diag([1.0, 4.0]))
        twin = GaussianDensity(d.mean.copy(), d.cov.copy())
        m = GaussianMixture(np.array([0.5, 0.5]), [d, twin])
        out = mixture_reduce(m, 1)
        assert out.size == 1
        assert out.weights[0] == pytest.approx(1.0)
        np.testing.assert_allclose(out.components[0].mean, d.mean, atol=1e-12)
        np.testing.assert_allclose(out.components[0].cov, d.cov, atol=1e-12)

    def test_under_budget_mixture_untouched(self):
        rng = np.random.default_rng(8)
        m = self._random_mixture(rng, 3)
        out = mixture_reduce(m, 10)
        assert out.size == 3
        for got, want in zip(out.components, m.components):
            np.testing.assert_allclose(got.mean, want.mean, atol=1e-14)

    def test_close_pairs_merge_below_threshold(self):
        """With a distance threshold, near-duplicates collapse even when the
        budget would allow keeping them."""
        d = GaussianDensity(np.zeros(2), np.eye(2))
        near = GaussianDensity(np.full(2, 1e-8), np.eye(2))
        far = GaussianDensity(np.full(2, 50.0), np.eye(2))
        m = GaussianMixture(np.array([0.4, 0.4, 0.2]), [d, near, far])
        out = mixture_reduce(m, 10, merge_threshold=0.1)
        assert out.size == 2

    def test_invalid_budget(self):
        m = GaussianMixture(np.array([1.0]), [GaussianDensity(np.zeros(1), np.eye(1))])
        with pytest.raises(DomainError):
            mixture_reduce(m, 0)
