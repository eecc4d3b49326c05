import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rssgp import (KernelParams, SpectralBasis, approx_gram, approx_kernel,
                   feature_map, feature_matrix, sample_frequencies, se_gram,
                   se_kernel)


@pytest.fixture
def params1d():
    return KernelParams.isotropic(1, 0.5, 2.0, 1e-4)


class TestKernelParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            KernelParams(np.array([0.5, -1.0]), 1.0, 1e-4)
        with pytest.raises(ValueError):
            KernelParams(np.array([0.5]), 0.0, 1e-4)
        with pytest.raises(ValueError):
            KernelParams(np.array([0.5]), 1.0, -1e-4)

    def test_zero_noise_allowed(self):
        # needed to reproduce the exact-GP ill-conditioning failure mode
        p = KernelParams(np.array([0.5]), 1.0, 0.0)
        assert p.noise_variance == 0.0


class TestSeKernel:
    def test_zero_distance_gives_signal_variance(self, params1d):
        for x in ([0.0], [3.7], [-2.0]):
            assert se_kernel(x, x, params1d) == params1d.signal_variance

    def test_closed_form_value(self, params1d):
        # 2 * exp(-0.5 * ((0 - 0.5)/0.5)^2) = 2 * exp(-0.5)
        assert se_kernel([0.0], [0.5], params1d) == pytest.approx(
            2.0 * np.exp(-0.5), rel=1e-12)
        assert se_kernel([0.0], [0.5], params1d) == pytest.approx(1.21306, abs=1e-5)

    def test_symmetry_random_pairs(self, params1d):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = rng.uniform(-5, 5, 2)
            assert se_kernel([a], [b], params1d) == se_kernel([b], [a], params1d)

    def test_dimension_mismatch(self, params1d):
        with pytest.raises(ValueError):
            se_kernel([0.0, 1.0], [0.0], params1d)
        with pytest.raises(ValueError):
            se_kernel([0.0, 1.0], [0.0, 1.0], params1d)

    def test_gram_matches_pairwise(self):
        rng = np.random.default_rng(1)
        p = KernelParams(np.array([0.4, 1.3]), 1.5, 1e-6)
        X = rng.uniform(-2, 2, (6, 2))
        G = se_gram(X, None, p)
        for i in range(6):
            for j in range(6):
                assert G[i, j] == pytest.approx(se_kernel(X[i], X[j], p), rel=1e-12)


class TestSampleFrequencies:
    def test_cardinality_and_shape(self, params1d):
        basis = sample_frequencies(params1d, 1, np.random.default_rng(3))
        assert basis.m == 1 and basis.frequencies.shape == (1, 1)

    def test_seed_determinism(self, params1d):
        b1 = sample_frequencies(params1d, 64, np.random.default_rng(11))
        b2 = sample_frequencies(params1d, 64, np.random.default_rng(11))
        np.testing.assert_array_equal(b1.frequencies, b2.frequencies)

    def test_m_validation(self, params1d):
        with pytest.raises(ValueError):
            sample_frequencies(params1d, 0, np.random.default_rng(0))

    def test_spectral_std_moment_check(self, params1d):
        # per-coordinate std must be 1/(2*pi*rho) = 0.3183... within 1%
        basis = sample_frequencies(params1d, 100_000, np.random.default_rng(5))
        std = basis.frequencies.std()
        target = 1.0 / (2.0 * np.pi * 0.5)
        assert abs(std - target) / target < 0.01

    def test_anisotropic_scales(self):
        p = KernelParams(np.array([0.25, 2.0]), 1.0, 1e-4)
        basis = sample_frequencies(p, 50_000, np.random.default_rng(6))
        stds = basis.frequencies.std(axis=0)
        targets = 1.0 / (2.0 * np.pi * p.lengthscales)
        np.testing.assert_allclose(stds, targets, rtol=0.02)


class TestFeatureMap:
    def test_zero_phase(self, params1d):
        basis = sample_frequencies(params1d, 5, np.random.default_rng(7))
        phi = feature_map([0.0], basis)
        np.testing.assert_array_equal(phi, np.tile([1.0, 0.0], 5))

    def test_quarter_period(self):
        basis = SpectralBasis(np.array([[1.0]]))
        phi = feature_map([0.25], basis)
        np.testing.assert_allclose(phi, [np.cos(np.pi / 2), np.sin(np.pi / 2)],
                                   atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=2), st.integers(0, 2**31))
    def test_norm_identity(self, x, seed):
        p = KernelParams.isotropic(2, 0.7, 1.0, 1e-4)
        basis = sample_frequencies(p, 9, np.random.default_rng(seed))
        phi = feature_map(x, basis)
        assert phi @ phi == pytest.approx(basis.m, abs=1e-9)

    def test_matrix_consistent_with_map(self, params1d):
        basis = sample_frequencies(params1d, 6, np.random.default_rng(9))
        X = np.linspace(-3, 3, 7)[:, None]
        P = feature_matrix(X, basis)
        assert P.shape == (12, 7)
        for i, x in enumerate(X):
            np.testing.assert_allclose(P[:, i], feature_map(x, basis), atol=1e-15)

    def test_dimension_mismatch(self, params1d):
        basis = sample_frequencies(params1d, 3, np.random.default_rng(0))
        with pytest.raises(ValueError):
            feature_map([0.0, 1.0], basis)


class TestApproxKernel:
    def test_zero_distance_exact(self, params1d):
        basis = sample_frequencies(params1d, 17, np.random.default_rng(10))
        for x in ([0.0], [4.2]):
            assert approx_kernel(x, x, basis, params1d) == params1d.signal_variance

    def test_stationarity_under_shift(self, params1d):
        basis = sample_frequencies(params1d, 8, np.random.default_rng(12))
        rng = np.random.default_rng(13)
        for _ in range(10):
            x, xp, c = rng.uniform(-3, 3, 3)
            assert approx_kernel([x], [xp], basis, params1d) == pytest.approx(
                approx_kernel([x + c], [xp + c], basis, params1d), abs=1e-12)

    def test_converges_to_se_kernel(self, params1d):
        basis = sample_frequencies(params1d, 4096, np.random.default_rng(14))
        grid = np.linspace(-2.5, 2.5, 101)
        err = max(abs(approx_kernel([x], [0.0], basis, params1d)
                      - se_kernel([x], [0.0], params1d)) for x in grid)
        assert err <= 0.08

    def test_consistent_with_feature_inner_product(self, params1d):
        basis = sample_frequencies(params1d, 11, np.random.default_rng(15))
        x, xp = [0.4], [-1.1]
        inner = feature_map(x, basis) @ feature_map(xp, basis)
        expected = params1d.signal_variance / basis.m * inner
        assert approx_kernel(x, xp, basis, params1d) == pytest.approx(expected,
                                                                      rel=1e-12)

    def test_gram_positive_semidefinite(self):
        # finite-rank kernel: no Gram eigenvalue below -1e-8 * sf2
        rng = np.random.default_rng(16)
        p = KernelParams(np.array([0.6, 0.9, 1.4]), 2.5, 1e-4)
        basis = sample_frequencies(p, 7, rng)
        X = rng.uniform(-2, 2, (40, 3))
        G = approx_gram(X, None, basis, p)
        eigs = np.linalg.eigvalsh(0.5 * (G + G.T))
        assert eigs.min() >= -1e-8 * p.signal_variance
