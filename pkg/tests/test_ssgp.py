import time

import numpy as np
import pytest
from scipy.linalg import cho_solve

from rssgp import (Dataset, KernelParams, SpectralBasis, approx_gram,
                   feature_map, fit_full_gp, fit_ssgp, predict_ssgp,
                   sample_frequencies, sample_posterior_weights,
                   ssgp_log_marginal, ssgp_log_marginal_grad)


@pytest.fixture
def params():
    return KernelParams.isotropic(1, 0.5, 2.0, 1e-3)


def random_instance(rng, d, t, m, noise=1e-3):
    params = KernelParams(rng.uniform(0.3, 1.2, d), rng.uniform(0.5, 3.0), noise)
    X = rng.uniform(-2, 2, (t, d))
    y = rng.standard_normal(t)
    basis = sample_frequencies(params, m, rng)
    return Dataset(X, y), basis, params


class TestFit:
    def test_requires_positive_noise(self, params):
        p = KernelParams(params.lengthscales, params.signal_variance, 0.0)
        basis = sample_frequencies(params, 4, np.random.default_rng(0))
        with pytest.raises(ValueError):
            fit_ssgp(Dataset.empty(1), basis, p)

    def test_empty_data(self, params):
        basis = sample_frequencies(params, 4, np.random.default_rng(1))
        model = fit_ssgp(Dataset.empty(1), basis, params)
        ridge = 4 * params.noise_variance / params.signal_variance
        np.testing.assert_allclose(model.a_factor, np.sqrt(ridge) * np.eye(8),
                                   atol=1e-15)
        np.testing.assert_array_equal(model.weight_mean, np.zeros(8))

    def test_single_point_explicit_construction(self, params):
        basis = sample_frequencies(params, 2, np.random.default_rng(2))
        data = Dataset(np.array([[0.7]]), np.array([1.5]))
        model = fit_ssgp(data, basis, params)
        phi = feature_map([0.7], basis)
        ridge = 2 * params.noise_variance / params.signal_variance
        A = np.outer(phi, phi) + ridge * np.eye(4)
        np.testing.assert_allclose(model.a_factor @ model.a_factor.T, A, atol=1e-12)
        np.testing.assert_allclose(A @ model.weight_mean, phi * 1.5, atol=1e-12)

    def test_deterministic_fit(self, params):
        rng = np.random.default_rng(3)
        data, basis, p = random_instance(rng, 1, 6, 5)
        m1 = fit_ssgp(data, basis, p)
        m2 = fit_ssgp(data, basis, p)
        np.testing.assert_array_equal(m1.a_factor, m2.a_factor)
        np.testing.assert_array_equal(m1.weight_mean, m2.weight_mean)

    def test_weight_mean_residual(self):
        rng = np.random.default_rng(4)
        data, basis, p = random_instance(rng, 2, 12, 6)
        model = fit_ssgp(data, basis, p)
        lhs = (model.a_factor @ model.a_factor.T) @ model.weight_mean
        rhs = model.phi @ data.targets
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * max(np.linalg.norm(rhs), 1.0)


class TestPredict:
    def test_prior_recovery(self, params):
        basis = sample_frequencies(params, 6, np.random.default_rng(5))
        model = fit_ssgp(Dataset.empty(1), basis, params)
        mean, var = predict_ssgp(model, [0.4])
        assert mean == 0.0
        assert var == pytest.approx(params.signal_variance, rel=1e-12)
        _, noisy = predict_ssgp(model, [0.4], include_noise=True)
        assert noisy == pytest.approx(params.signal_variance + params.noise_variance,
                                      rel=1e-12)

    def test_equivalence_with_full_gp_on_approx_kernel(self):
        # the module's master oracle
        rng = np.random.default_rng(6)
        for d, t, m in ((1, 8, 4), (2, 12, 6), (3, 15, 8)):
            data, basis, p = random_instance(rng, d, t, m)
            ssgp = fit_ssgp(data, basis, p)
            dense = fit_full_gp(data, p,
                                kernel=lambda A, B, pp: approx_gram(A, B, basis, pp))
            for xq in rng.uniform(-2, 2, (10, d)):
                m1, v1 = ssgp.predict(xq)
                m2, v2 = dense.predict(xq)
                assert m1 == pytest.approx(m2, abs=1e-6)
                assert v1 == pytest.approx(v2, abs=1e-6)

    def test_hand_sized_linear_solve(self):
        # m=1, t=1: prediction from an explicit 2x2 solve
        p = KernelParams(np.array([1.0]), 1.0, 0.01)
        basis = SpectralBasis(np.array([[0.25]]))
        data = Dataset(np.array([[1.0]]), np.array([2.0]))
        model = fit_ssgp(data, basis, p)
        phi_train = feature_map([1.0], basis)
        A = np.outer(phi_train, phi_train) + 0.01 * np.eye(2)
        w = np.linalg.solve(A, phi_train * 2.0)
        phi_q = feature_map([0.3], basis)
        mean, var = model.predict([0.3])
        assert mean == pytest.approx(phi_q @ w, rel=1e-12)
        assert var == pytest.approx(0.01 * phi_q @ np.linalg.solve(A, phi_q),
                                    rel=1e-12)

    def test_latent_variance_bounds(self):
        rng = np.random.default_rng(7)
        data, basis, p = random_instance(rng, 2, 20, 10)
        model = fit_ssgp(data, basis, p)
        _, var = model.predict_batch(rng.uniform(-3, 3, (100, 2)))
        assert np.all(var >= 0.0)
        assert np.all(var <= p.signal_variance + 1e-8)


class TestLogMarginal:
    def test_empty_data_identity(self, params):
        basis = sample_frequencies(params, 7, np.random.default_rng(8))
        model = fit_ssgp(Dataset.empty(1), basis, params)
        assert abs(ssgp_log_marginal(model)) <= 1e-9

    def test_dense_gaussian_oracle(self):
        rng = np.random.default_rng(9)
        for d, t, m in ((1, 5, 3), (2, 10, 5), (3, 9, 4)):
            data, basis, p = random_instance(rng, d, t, m)
            model = fit_ssgp(data, basis, p)
            K = approx_gram(data.inputs, None, basis, p) \
                + p.noise_variance * np.eye(t)
            _, logdet = np.linalg.slogdet(K)
            y = data.targets
            dense = -0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet \
                - 0.5 * t * np.log(2 * np.pi)
            assert ssgp_log_marginal(model) == pytest.approx(dense, abs=1e-6)

    def test_noise_shrink_raises_likelihood_on_consistent_data(self, params):
        # noise-free data drawn from the model's own feature space
        rng = np.random.default_rng(10)
        basis = sample_frequencies(params, 6, rng)
        X = rng.uniform(-2, 2, (9, 1))
        theta = rng.standard_normal(12)
        y = np.array([feature_map(x, basis) @ theta for x in X])
        values = []
        for noise in (1e-2, 1e-3, 1e-4, 1e-5):
            p = KernelParams(params.lengthscales, params.signal_variance, noise)
            values.append(ssgp_log_marginal(fit_ssgp(Dataset(X, y), basis, p)))
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(11)
        data, basis, p = random_instance(rng, 1, 8, 5)
        perm = rng.permutation(8)
        m1 = fit_ssgp(data, basis, p)
        m2 = fit_ssgp(Dataset(data.inputs[perm], data.targets[perm]), basis, p)
        assert ssgp_log_marginal(m1) == pytest.approx(ssgp_log_marginal(m2),
                                                      abs=1e-9)

    def test_frequency_sign_flip_invariance(self):
        rng = np.random.default_rng(12)
        data, basis, p = random_instance(rng, 2, 7, 4)
        flipped = basis.frequencies.copy()
        flipped[2] = -flipped[2]
        m1 = fit_ssgp(data, basis, p)
        m2 = fit_ssgp(data, SpectralBasis(flipped), p)
        assert ssgp_log_marginal(m1) == pytest.approx(ssgp_log_marginal(m2),
                                                      abs=1e-9)


class TestGradient:
    def test_zero_targets_zero_data_fit_gradient(self):
        # with Y = 0 the gradient reduces to the log-determinant part
        rng = np.random.default_rng(13)
        params = KernelParams(np.array([0.8]), 1.3, 1e-2)
        basis = sample_frequencies(params, 4, rng)
        X = rng.uniform(-1, 1, (5, 1))
        model = fit_ssgp(Dataset(X, np.zeros(5)), basis, params)
        g = ssgp_log_marginal_grad(model)
        # data-fit contribution vanishes: quad term and alpha are zero
        assert np.all(model.weight_mean == 0.0)
        # remaining gradient matches finite differences of the full marginal
        F = basis.frequencies
        for r in range(4):
            h = 1e-6
            up = F.copy(); up[r, 0] += h
            dn = F.copy(); dn[r, 0] -= h
            fd = (ssgp_log_marginal(fit_ssgp(Dataset(X, np.zeros(5)),
                                             SpectralBasis(up), params))
                  - ssgp_log_marginal(fit_ssgp(Dataset(X, np.zeros(5)),
                                               SpectralBasis(dn), params))) / (2 * h)
            assert g.frequencies[r, 0] == pytest.approx(fd, abs=1e-4)

    def test_empty_data_zero_frequency_gradient(self, params):
        basis = sample_frequencies(params, 5, np.random.default_rng(14))
        g = ssgp_log_marginal_grad(fit_ssgp(Dataset.empty(1), basis, params))
        np.testing.assert_array_equal(g.frequencies, np.zeros((5, 1)))
        assert g.log_signal_variance == pytest.approx(0.0, abs=1e-9)
        assert g.log_noise_variance == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("d", [1, 3])
    def test_finite_difference_match(self, d):
        rng = np.random.default_rng(15 + d)
        data, basis, p = random_instance(rng, d, 7, 5)

        def lml(freqs, sf2=p.signal_variance, noise=p.noise_variance):
            pp = KernelParams(p.lengthscales, sf2, noise)
            return ssgp_log_marginal(fit_ssgp(data, SpectralBasis(freqs), pp))

        g = ssgp_log_marginal_grad(fit_ssgp(data, basis, p))
        F = basis.frequencies
        scale = 1.0 / (2 * np.pi * p.lengthscales)
        for r in range(5):
            for l in range(d):
                h = 1e-5 * max(abs(F[r, l]), scale[l])
                up = F.copy(); up[r, l] += h
                dn = F.copy(); dn[r, l] -= h
                fd = (lml(up) - lml(dn)) / (2 * h)
                assert g.frequencies[r, l] == pytest.approx(fd, rel=1e-4, abs=1e-8)
        h = 1e-6
        fd = (lml(F, sf2=p.signal_variance * np.exp(h))
              - lml(F, sf2=p.signal_variance * np.exp(-h))) / (2 * h)
        assert g.log_signal_variance == pytest.approx(fd, rel=1e-4)
        fd = (lml(F, noise=p.noise_variance * np.exp(h))
              - lml(F, noise=p.noise_variance * np.exp(-h))) / (2 * h)
        assert g.log_noise_variance == pytest.approx(fd, rel=1e-4)
        # lengthscale direction: frequencies rescale as 1/rho
        for l in range(d):
            up = F.copy(); up[:, l] *= np.exp(-h)
            dn = F.copy(); dn[:, l] *= np.exp(h)
            fd = (lml(up) - lml(dn)) / (2 * h)
            assert g.log_lengthscales[l] == pytest.approx(fd, rel=1e-4, abs=1e-8)


class TestWeightSampling:
    def test_noise_to_zero_collapses_to_mean(self):
        # needs t >= 2m so every weight direction is data-determined
        rng = np.random.default_rng(20)
        params = KernelParams(np.array([0.5]), 2.0, 1e-14)
        basis = sample_frequencies(params, 3, rng)
        X = rng.uniform(-1, 1, (30, 1))
        y = rng.standard_normal(30)
        model = fit_ssgp(Dataset(X, y), basis, params)
        draws = sample_posterior_weights(model, rng, size=50)
        spread = np.abs(draws - model.weight_mean).max()
        assert spread <= 1e-5 * max(1.0, np.abs(model.weight_mean).max())

    def test_moments(self):
        rng = np.random.default_rng(21)
        params = KernelParams(np.array([0.7]), 1.5, 0.05)
        basis = sample_frequencies(params, 2, rng)  # 2m = 4
        X = rng.uniform(-1, 1, (5, 1))
        y = rng.standard_normal(5)
        model = fit_ssgp(Dataset(X, y), basis, params)
        n = 100_000
        draws = sample_posterior_weights(model, rng, size=n)
        cov = params.noise_variance * np.linalg.inv(
            model.a_factor @ model.a_factor.T)
        se = np.sqrt(np.diag(cov) / n)
        np.testing.assert_array_less(np.abs(draws.mean(0) - model.weight_mean),
                                     3 * se + 1e-15)
        sample_cov = np.cov(draws.T)
        np.testing.assert_allclose(sample_cov, cov, rtol=0.05, atol=1e-9)

    def test_shapes(self, params):
        basis = sample_frequencies(params, 3, np.random.default_rng(22))
        model = fit_ssgp(Dataset.empty(1), basis, params)
        assert sample_posterior_weights(model, np.random.default_rng(0)).shape == (6,)
        assert sample_posterior_weights(model, np.random.default_rng(0),
                                        size=7).shape == (7, 6)


@pytest.mark.slow
def test_fit_cost_scales_linearly_in_t():
    rng = np.random.default_rng(23)
    params = KernelParams(np.array([0.5]), 2.0, 1e-3)
    basis = sample_frequencies(params, 50, rng)
    times = {}
    for t in (4000, 8000):
        X = rng.uniform(-2, 2, (t, 1))
        y = rng.standard_normal(t)
        data = Dataset(X, y)
        best = np.inf
        for _ in range(5):
            start = time.perf_counter()
            fit_ssgp(data, basis, params)
            best = min(best, time.perf_counter() - start)
        times[t] = best
    ratio = times[8000] / times[4000]
    assert 1.4 <= ratio <= 2.6  # 2 +- 30%
