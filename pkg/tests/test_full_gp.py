import numpy as np
import pytest

from rssgp import (Dataset, IllConditionedModelError, KernelParams, SearchBox,
                   fit_full_gp, predict_full_gp, se_gram)


@pytest.fixture
def params():
    return KernelParams.isotropic(1, 0.5, 2.0, 1e-4)


class TestDataset:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 1)), np.zeros(2))

    def test_box_check_warns(self):
        data = Dataset(np.array([[0.0], [5.0]]), np.array([1.0, 2.0]))
        box = SearchBox([-1.0], [1.0])
        with pytest.warns(RuntimeWarning, match="outside"):
            data.check_box(box)

    def test_append(self):
        data = Dataset.empty(2).append([1.0, 2.0], 3.0)
        assert data.t == 1 and data.dim == 2


class TestFit:
    def test_scalar_case(self, params):
        model = fit_full_gp(Dataset(np.array([[0.0]]), np.array([3.0])), params)
        # 1x1 gram matrix [2 + 1e-4] factorizes to its square root
        assert model.gram_factor[0, 0] == pytest.approx(np.sqrt(2.0001), rel=1e-12)
        assert model.jitter == 0.0

    def test_duplicate_rows_zero_noise_raise(self):
        p = KernelParams(np.array([0.5]), 2.0, 0.0)
        data = Dataset(np.array([[1.0], [1.0]]), np.array([0.3, 0.3]))
        with pytest.raises(IllConditionedModelError) as err:
            fit_full_gp(data, p)
        assert err.value.jitter == pytest.approx(1e-4 * 2.0)

    def test_reconstruction_accuracy(self, params):
        rng = np.random.default_rng(0)
        data = Dataset(rng.uniform(-2, 2, (3, 1)), rng.standard_normal(3))
        model = fit_full_gp(data, params)
        M = se_gram(data.inputs, None, params) + params.noise_variance * np.eye(3)
        err = np.linalg.norm(model.gram_factor @ model.gram_factor.T - M)
        assert err <= 1e-8

    def test_alpha_solves_system(self, params):
        rng = np.random.default_rng(1)
        data = Dataset(rng.uniform(-2, 2, (6, 1)), rng.standard_normal(6))
        model = fit_full_gp(data, params)
        M = se_gram(data.inputs, None, params) + params.noise_variance * np.eye(6)
        np.testing.assert_allclose(M @ model.alpha, data.targets, atol=1e-8)


class TestPredict:
    def test_empty_dataset_prior(self, params):
        model = fit_full_gp(Dataset.empty(1), params)
        mean, var = predict_full_gp(model, [0.7])
        assert mean == 0.0 and var == params.signal_variance
        _, var_n = predict_full_gp(model, [0.7], include_noise=True)
        assert var_n == params.signal_variance + params.noise_variance

    def test_interpolation_limit(self):
        p = KernelParams(np.array([0.5]), 2.0, 1e-12)
        X = np.array([[0.0], [1.0], [2.5]])
        y = np.array([1.0, -0.5, 0.3])
        model = fit_full_gp(Dataset(X, y), p)
        for xi, yi in zip(X, y):
            mean, var = predict_full_gp(model, xi)
            assert mean == pytest.approx(yi, abs=1e-6)
            assert var == pytest.approx(0.0, abs=1e-6)

    def test_dense_inverse_oracle(self, params):
        rng = np.random.default_rng(2)
        X = rng.uniform(-2, 2, (5, 1))
        y = rng.standard_normal(5)
        model = fit_full_gp(Dataset(X, y), params)
        M = se_gram(X, None, params) + params.noise_variance * np.eye(5)
        Minv = np.linalg.inv(M)
        for xq in rng.uniform(-2, 2, (8, 1)):
            k = se_gram(X, xq[None, :], params)[:, 0]
            mean, var = predict_full_gp(model, xq)
            assert mean == pytest.approx(k @ Minv @ y, abs=1e-8)
            expected_var = params.signal_variance - k @ Minv @ k
            assert var == pytest.approx(expected_var, abs=1e-8)

    def test_variance_below_prior(self, params):
        rng = np.random.default_rng(3)
        model = fit_full_gp(Dataset(rng.uniform(-2, 2, (10, 1)),
                                    rng.standard_normal(10)), params)
        _, var = model.predict_batch(rng.uniform(-3, 3, (50, 1)))
        assert np.all(var <= params.signal_variance + 1e-8)
        assert np.all(var >= 0.0)

    def test_monotone_information(self, params):
        # adding an observation never increases latent variance anywhere
        rng = np.random.default_rng(4)
        X = rng.uniform(-2, 2, (7, 1))
        y = rng.standard_normal(7)
        queries = rng.uniform(-2, 2, (20, 1))
        before = fit_full_gp(Dataset(X[:-1], y[:-1]), params)
        after = fit_full_gp(Dataset(X, y), params)
        _, var_before = before.predict_batch(queries)
        _, var_after = after.predict_batch(queries)
        assert np.all(var_after <= var_before + 1e-8)

    def test_permutation_invariance(self, params):
        rng = np.random.default_rng(5)
        X = rng.uniform(-2, 2, (6, 1))
        y = rng.standard_normal(6)
        perm = rng.permutation(6)
        m1 = fit_full_gp(Dataset(X, y), params)
        m2 = fit_full_gp(Dataset(X[perm], y[perm]), params)
        for xq in rng.uniform(-2, 2, (5, 1)):
            assert m1.predict(xq)[0] == pytest.approx(m2.predict(xq)[0], abs=1e-9)

    def test_dimension_mismatch(self, params):
        model = fit_full_gp(Dataset.empty(1), params)
        with pytest.raises(ValueError):
            predict_full_gp(model, [0.0, 1.0])


class TestIllConditioning:
    def test_near_duplicates_zero_noise(self):
        # many observations collapsed onto one location, no noise floor
        p = KernelParams(np.array([0.5]), 2.0, 0.0)
        rng = np.random.default_rng(6)
        X = 0.3 + 1e-9 * rng.standard_normal((200, 1))
        data = Dataset(X, np.sin(X).ravel())
        with pytest.raises(IllConditionedModelError):
            fit_full_gp(data, p)

    def test_healthy_fit_with_noise_floor(self):
        # the same geometry with a noise floor factorizes fine
        p = KernelParams(np.array([0.5]), 2.0, 1e-4)
        rng = np.random.default_rng(7)
        X = 0.3 + 1e-6 * rng.standard_normal((200, 1))
        data = Dataset(X, np.sin(X).ravel())
        model = fit_full_gp(data, p)
        mean, var = model.predict(np.array([0.3]))
        assert np.isfinite(mean) and np.isfinite(var)
