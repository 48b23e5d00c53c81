import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nashbo.games import ActionProfile, ObservationDataset
from nashbo.surrogate import (
    GpPosterior,
    KernelConfig,
    RffFeatureMap,
    WeightPosterior,
    gp_posterior_at,
    rbf_gram,
    rbf_kernel,
    rff_features,
    weight_posterior,
    weight_space_posterior_at,
)


def make_dataset(xs, ys):
    data = ObservationDataset(num_players=1)
    for x, y in zip(xs, ys):
        data.append(ActionProfile(np.atleast_2d(x)), [y])
    return data


class TestRbfKernel:
    def test_identical_inputs(self):
        cfg = KernelConfig()
        x = np.array([0.3, 0.7])
        assert rbf_kernel(x, x, cfg) == 1.0

    def test_scalar_value(self):
        cfg = KernelConfig(lengthscale=0.85)
        x, y = np.array([0.0]), np.array([1.3])
        expected = math.exp(-1.69 / (2 * 0.85**2))  # = 0.3105065840975545
        assert rbf_kernel(x, y, cfg) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.3105066, abs=1e-6)

    @given(st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=3), rng.normal(size=3)
        cfg = KernelConfig()
        assert rbf_kernel(x, y, cfg) == rbf_kernel(y, x, cfg)
        assert 0.0 < rbf_kernel(x, y, cfg) <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rbf_kernel(np.zeros(2), np.zeros(3), KernelConfig())


class TestGpPosterior:
    def test_prior_state(self):
        gp = GpPosterior.fit(np.empty((0, 2)), np.empty((1, 0)), KernelConfig())
        mean, var = gp_posterior_at(gp, 0, np.array([0.1, 0.2]))
        assert mean == 0.0
        assert var == pytest.approx(1.0)

    def test_single_point_closed_form(self):
        cfg = KernelConfig(noise_var=0.67)
        y = 1.7
        gp = GpPosterior.fit(np.array([[0.5]]), np.array([[y]]), cfg)
        mean, var = gp_posterior_at(gp, 0, np.array([0.5]))
        assert mean == pytest.approx(y / 1.67, rel=1e-12)
        assert var == pytest.approx(1.0 - 1.0 / 1.67, rel=1e-12)
        assert var == pytest.approx(0.40119, abs=1e-5)

    def test_variance_shrinks_with_data(self, rng):
        cfg = KernelConfig()
        for _ in range(20):
            xs = rng.uniform(0, 1, size=(6, 2))
            ys = rng.normal(size=(1, 6))
            q = rng.uniform(0, 1, size=2)
            last = np.inf
            for t in range(7):
                gp = GpPosterior.fit(xs[:t], ys[:, :t], cfg)
                _, var = gp_posterior_at(gp, 0, q)
                assert var <= last + 1e-12
                last = var

    def test_variance_bounded_by_prior(self, rng):
        cfg = KernelConfig()
        xs = rng.uniform(0, 1, size=(5, 2))
        ys = rng.normal(size=(1, 5))
        gp = GpPosterior.fit(xs, ys, cfg)
        for _ in range(20):
            _, var = gp_posterior_at(gp, 0, rng.uniform(0, 1, size=2))
            assert 0.0 <= var <= 1.0 + 1e-12


class TestRffFeatures:
    def test_degenerate_map_is_constant(self):
        fm = RffFeatureMap(frequencies=np.zeros((1, 3)), phases=np.zeros(1), lengthscale=0.85)
        for x in (np.zeros(3), np.ones(3) * 5):
            assert rff_features(fm, x)[0] == pytest.approx(math.sqrt(2.0))

    def test_norm_bound(self, rng):
        fm = RffFeatureMap.draw(64, 4, 0.85, rng)
        for _ in range(100):
            psi = fm.features(rng.normal(size=4))
            assert psi @ psi <= 2.0 + 1e-12

    def test_deterministic(self, rng):
        fm = RffFeatureMap.draw(32, 2, 0.85, rng)
        x = rng.normal(size=2)
        np.testing.assert_array_equal(fm.features(x), fm.features(x))

    def test_kernel_approximation_monte_carlo(self):
        cfg = KernelConfig(lengthscale=0.85)
        rng = np.random.default_rng(7)
        fm = RffFeatureMap.draw(2000, 3, 0.85, np.random.default_rng(0))
        a = rng.uniform(0, 1, size=(1000, 3))
        b = rng.uniform(0, 1, size=(1000, 3))
        approx = np.sum(fm.features_many(a) * fm.features_many(b), axis=1)
        exact = rbf_gram(a, b, cfg).diagonal()
        err = np.abs(approx - exact)
        assert err.mean() < 0.02
        assert err.max() < 0.05

    def test_error_decreases_with_dimension(self):
        cfg = KernelConfig(lengthscale=0.85)
        rng = np.random.default_rng(3)
        a = rng.uniform(0, 1, size=(500, 4))
        b = rng.uniform(0, 1, size=(500, 4))
        exact = rbf_gram(a, b, cfg).diagonal()
        errs = {}
        for dim in (200, 2000):
            fm = RffFeatureMap.draw(dim, 4, 0.85, np.random.default_rng(10))
            approx = np.sum(fm.features_many(a) * fm.features_many(b), axis=1)
            errs[dim] = np.abs(approx - exact).mean()
        assert errs[2000] < errs[200]

    def test_json_roundtrip(self, tmp_path, rng):
        fm = RffFeatureMap.draw(16, 3, 0.85, rng)
        path = tmp_path / "map.json"
        fm.save(path)
        restored = RffFeatureMap.load(path)
        np.testing.assert_array_equal(restored.frequencies, fm.frequencies)
        np.testing.assert_array_equal(restored.phases, fm.phases)
        assert restored.lengthscale == fm.lengthscale


class TestWeightPosterior:
    def test_empty_dataset(self):
        fm = RffFeatureMap.draw(8, 2, 0.85, np.random.default_rng(0))
        wp = weight_posterior(fm, ObservationDataset(num_players=1), 0, 0.67)
        np.testing.assert_array_equal(wp.mean, np.zeros(8))
        np.testing.assert_array_equal(wp.precision_like, 0.67 * np.eye(8))

    def test_scalar_closed_form(self):
        c, y, s2 = 0.9, 2.0, 0.5
        fm = RffFeatureMap(frequencies=np.zeros((1, 1)), phases=np.array([math.acos(c / math.sqrt(2.0))]), lengthscale=1.0)
        psi = fm.features(np.array([0.0]))[0]
        data = make_dataset([np.array([0.0])], [y])
        wp = weight_posterior(fm, data, 0, s2)
        assert wp.precision_like[0, 0] == pytest.approx(psi**2 + s2)
        assert wp.mean[0] == pytest.approx(psi * y / (psi**2 + s2))

    def test_eigenvalues_at_least_noise(self, rng):
        fm = RffFeatureMap.draw(12, 2, 0.85, rng)
        xs = rng.uniform(0, 1, size=(5, 2))
        data = make_dataset(list(xs), list(rng.normal(size=5)))
        wp = weight_posterior(fm, data, 0, 0.67)
        assert np.linalg.eigvalsh(wp.precision_like).min() >= 0.67 - 1e-9
        np.testing.assert_allclose(wp.precision_like, wp.precision_like.T)


class TestWeightSpaceDuality:
    def test_prior_value(self, rng):
        fm = RffFeatureMap.draw(16, 2, 0.85, rng)
        wp = weight_posterior(fm, ObservationDataset(num_players=1), 0, 0.67)
        x = rng.normal(size=2)
        mean, var = weight_space_posterior_at(wp, fm, x)
        psi = fm.features(x)
        assert mean == 0.0
        assert var == pytest.approx(psi @ psi)

    def test_variance_nonnegative(self, rng):
        fm = RffFeatureMap.draw(24, 3, 0.85, rng)
        xs = rng.uniform(0, 1, size=(10, 3))
        data = ObservationDataset(num_players=1)
        for x in xs:
            data.append(ActionProfile(x.reshape(1, -1)), [rng.normal()])
        wp = weight_posterior(fm, data, 0, 0.67)
        for _ in range(1000):
            _, var = weight_space_posterior_at(wp, fm, rng.uniform(0, 1, size=3))
            assert var >= 0.0

    def test_matches_kernel_space_with_exact_kernel(self, rng):
        fm = RffFeatureMap.draw(32, 4, 0.85, np.random.default_rng(5))
        s2 = 0.67
        xs = rng.uniform(0, 1, size=(30, 4))
        ys = rng.normal(size=(1, 30))
        kernel = lambda a, b: fm.features_many(a) @ fm.features_many(b).T  # noqa: E731
        gp = GpPosterior.fit(xs, ys, KernelConfig(noise_var=s2), kernel=kernel)
        data = ObservationDataset(num_players=1)
        for x, y in zip(xs, ys[0]):
            data.append(ActionProfile(x.reshape(2, 2)), [y])
        wp = weight_posterior(fm, data, 0, s2)
        for _ in range(100):
            q = rng.uniform(0, 1, size=4)
            km, kv = gp_posterior_at(gp, 0, q)
            wm, wv = weight_space_posterior_at(wp, fm, q)
            assert abs(km - wm) < 1e-6
            assert abs(kv - wv) < 1e-6

    def test_variance_identical_across_players(self, rng):
        # the variance formula has no y in it: shared history => shared variance
        fm = RffFeatureMap.draw(16, 2, 0.85, rng)
        data = ObservationDataset(num_players=3)
        for _ in range(6):
            data.append(ActionProfile(rng.uniform(0, 1, size=(2, 1))), rng.normal(size=3))
        q = rng.uniform(0, 1, size=2)
        variances = []
        for player in range(3):
            wp = weight_posterior(fm, data, player, 0.67)
            variances.append(weight_space_posterior_at(wp, fm, q)[1])
        assert variances[0] == pytest.approx(variances[1], rel=1e-12)
        assert variances[0] == pytest.approx(variances[2], rel=1e-12)
