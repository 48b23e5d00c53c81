import numpy as np
import pytest

from nashbo.acquisition import (
    AcquisitionConfig,
    AcquisitionState,
    PprUcbSession,
    SharedPosterior,
    exploring_profile,
    minimax_report_index,
    ppr_ucb_run,
    regret_bounds_on_grid,
    reported_profile,
    select_next,
    worst_player,
)
from nashbo.games import GameSpec, equal_allocation_profile, planted_pne_game, table_game


def product_spec(values_a, values_b):
    grid = np.stack(
        np.meshgrid(np.asarray(values_a, float), np.asarray(values_b, float), indexing="ij"),
        axis=-1,
    ).reshape(-1, 2, 1)
    low = float(min(grid.min(), 0.0))
    return GameSpec(2, 1, (low, float(grid.max())), grid)


def state_from_bounds(spec, util_lower, util_upper, variance):
    f_lower, f_upper = regret_bounds_on_grid(util_lower, util_upper, spec)
    return AcquisitionState(
        iteration=1,
        spec=spec,
        feature_map=None,
        dataset=None,
        sets=None,
        util_lower=util_lower,
        util_upper=util_upper,
        regret_lower=f_lower,
        regret_upper=f_upper,
        variance=variance,
        flags=np.zeros_like(util_lower, dtype=np.uint8),
    )


class TestDecisionRules:
    def test_minimax_prefers_smaller_worst_bound(self):
        lower = np.array([[0.2, 0.4], [0.5, 0.3]])
        assert minimax_report_index(lower) == 1  # max 0.4 < max 0.5

    def test_minimax_tie_breaks_low_index(self):
        lower = np.full((3, 4), 0.7)
        assert minimax_report_index(lower) == 0

    def test_minimax_single_player_is_plain_argmin(self, rng):
        lower = rng.normal(size=(1, 10))
        assert minimax_report_index(lower) == int(np.argmin(lower[0]))

    def test_worst_player_argmax(self):
        spec = product_spec([0, 1], [0, 1])
        upper = np.array([[1.0, 1, 1, 1], [0.2, 0.2, 0.2, 0.2]])
        state = state_from_bounds(spec, upper - 0.1, upper, np.zeros(4))
        assert np.argmax(state.regret_upper[:, 0]) in (0, 1)
        # direct rule check on raw bounds
        assert int(np.argmax(np.array([1.0, 0.2]))) == 0
        assert int(np.argmax(np.array([0.5, 0.5]))) == 0

    def test_worst_player_matches_scan(self, rng):
        for _ in range(20):
            bounds = rng.normal(size=7)
            scan = max(range(7), key=lambda n: (bounds[n], -n))
            assert int(np.argmax(bounds)) == scan

    def test_exploring_picks_best_upper_deviation(self):
        spec = product_spec([0, 1, 2], [0, 1])
        util_upper = np.zeros((2, 6))
        # player 0 deviations of column j=0 are grid indices {0, 2, 4}
        util_upper[0, 0] = 0.1
        util_upper[0, 2] = 0.9
        util_upper[0, 4] = 0.4
        state = state_from_bounds(spec, util_upper - 1.0, util_upper, np.zeros(6))
        chosen = exploring_profile(state, spec.profile(0), 0)
        assert spec.profile_index(chosen) == 2

    def test_exploring_singleton_returns_same(self):
        grid = np.array([[[0.0], [0.0]], [[0.0], [1.0]]])
        spec = GameSpec(2, 1, (0.0, 1.0), grid)
        # player 0's deviation set for either profile is just itself
        util_upper = np.array([[0.3, 0.6], [0.1, 0.2]])
        state = state_from_bounds(spec, util_upper - 1.0, util_upper, np.zeros(2))
        chosen = exploring_profile(state, spec.profile(1), 0)
        assert spec.profile_index(chosen) == 1

    def test_exploring_matches_scan(self, rng):
        spec = product_spec(np.arange(4), np.arange(3))
        util_upper = rng.normal(size=(2, 12))
        state = state_from_bounds(spec, util_upper - 1.0, util_upper, np.zeros(12))
        g = int(rng.integers(12))
        player = int(rng.integers(2))
        members = spec.deviation_members(g, player)
        best = max(members, key=lambda m: (util_upper[player, m], -m))
        chosen = exploring_profile(state, spec.profile(g), player)
        assert spec.profile_index(chosen) == best

    def test_select_next_prefers_higher_variance(self):
        spec = product_spec([0, 1], [0, 1])
        variance = np.array([0.3, 0.5, 0.1, 0.2])
        state = state_from_bounds(spec, np.zeros((2, 4)), np.ones((2, 4)), variance)
        assert spec.profile_index(select_next(state, spec.profile(0), spec.profile(1))) == 1

    def test_select_next_tie_keeps_reported(self):
        spec = product_spec([0, 1], [0, 1])
        variance = np.full(4, 0.4)
        state = state_from_bounds(spec, np.zeros((2, 4)), np.ones((2, 4)), variance)
        assert spec.profile_index(select_next(state, spec.profile(2), spec.profile(1))) == 2

    def test_select_next_same_candidate(self):
        spec = product_spec([0, 1], [0, 1])
        state = state_from_bounds(spec, np.zeros((2, 4)), np.ones((2, 4)), np.arange(4.0))
        assert spec.profile_index(select_next(state, spec.profile(3), spec.profile(3))) == 3

    def test_argmax_invariant_under_monotone_transform(self, rng):
        lower = rng.normal(size=(3, 8))
        upper = lower + rng.uniform(0.1, 1.0, size=(3, 8))
        assert minimax_report_index(lower) == minimax_report_index(np.exp(lower))
        g = minimax_report_index(lower)
        assert int(np.argmax(upper[:, g])) == int(np.argmax(np.exp(upper[:, g])))


class TestRegretBounds:
    def test_bounds_ordered_and_upper_nonnegative(self, rng):
        spec = product_spec(np.arange(3), np.arange(3))
        util_lower = rng.normal(size=(2, 9))
        util_upper = util_lower + rng.uniform(0, 1, size=(2, 9))
        f_lower, f_upper = regret_bounds_on_grid(util_lower, util_upper, spec)
        assert (f_lower <= f_upper + 1e-12).all()
        assert (f_upper >= -1e-12).all()

    def test_degenerate_intervals_collapse_to_exact_regret(self, rng):
        payoffs = rng.normal(size=(2, 3, 3))
        oracle, spec = table_game(payoffs)
        utilities = oracle.evaluate_grid(spec).T  # (N, G)
        f_lower, f_upper = regret_bounds_on_grid(utilities, utilities, spec)
        from nashbo.games import regret_matrix

        exact = regret_matrix(utilities.T, spec)
        np.testing.assert_allclose(f_lower, exact, atol=1e-12)
        np.testing.assert_allclose(f_upper, exact, atol=1e-12)


class TestRunLoop:
    def test_zero_iterations_returns_initialization(self):
        oracle, spec, _ = planted_pne_game(seed=1, noise_std=0.05)
        cfg = AcquisitionConfig(iterations=0, rff_dim=64, noise_var=0.0025, seed=0)
        final, traces = ppr_ucb_run(oracle, spec, cfg)
        assert traces == []
        assert spec.profile_index(final) == equal_allocation_profile(spec)

    def test_deterministic_trace(self):
        oracle_a, spec_a, _ = planted_pne_game(seed=2, noise_std=0.05)
        oracle_b, spec_b, _ = planted_pne_game(seed=2, noise_std=0.05)
        cfg = AcquisitionConfig(iterations=8, rff_dim=64, noise_var=0.0025, seed=5)
        _, ta = ppr_ucb_run(oracle_a, spec_a, cfg)
        _, tb = ppr_ucb_run(oracle_b, spec_b, cfg)
        for a, b in zip(ta, tb):
            assert a.chosen_idx == b.chosen_idx
            assert a.reported_idx == b.reported_idx
            np.testing.assert_array_equal(a.observations, b.observations)
            np.testing.assert_array_equal(a.regret_lower, b.regret_lower)

    def test_chosen_among_candidates_and_datasets_aligned(self):
        oracle, spec, _ = planted_pne_game(seed=3, noise_std=0.05)
        cfg = AcquisitionConfig(iterations=10, rff_dim=64, noise_var=0.0025, seed=1)
        session = PprUcbSession(oracle, spec, cfg)
        for _ in range(10):
            trace = session.step()
            assert trace.chosen_idx in (trace.reported_idx, trace.exploring_idx)
            assert trace.regret_lower.shape == (2,)
            assert (trace.regret_lower <= trace.regret_upper + 1e-12).all()
        assert session.dataset.size == 10
        assert session.dataset.observations.shape == (2, 10)

    def test_final_profile_is_last_chosen(self):
        oracle, spec, _ = planted_pne_game(seed=4, noise_std=0.05)
        cfg = AcquisitionConfig(iterations=6, rff_dim=64, noise_var=0.0025, seed=2)
        final, traces = ppr_ucb_run(oracle, spec, cfg)
        assert spec.profile_index(final) == traces[-1].chosen_idx

    def test_reported_profile_wrapper(self):
        oracle, spec, _ = planted_pne_game(seed=5, noise_std=0.05)
        cfg = AcquisitionConfig(iterations=3, rff_dim=64, noise_var=0.0025, seed=3)
        session = PprUcbSession(oracle, spec, cfg)
        for _ in range(3):
            session.step()
        state = session.current_state()
        rep = reported_profile(state)
        assert spec.profile_index(rep) == minimax_report_index(state.regret_lower)
        n_star = worst_player(state, rep)
        assert n_star == int(np.argmax(state.regret_upper[:, spec.profile_index(rep)]))


class TestSharedPosterior:
    def test_variance_matches_weight_space(self, rng):
        from nashbo.games import ActionProfile, ObservationDataset
        from nashbo.surrogate import RffFeatureMap, weight_posterior, weight_space_posterior_at

        oracle, spec, _ = planted_pne_game(seed=6, noise_std=0.05)
        fm = RffFeatureMap.draw(48, 2, 0.85, rng)
        phi = fm.features_many(spec.grid_flat)
        chosen = [0, 3, 7, 7, 12]
        obs = rng.normal(size=(2, 5))
        shared = SharedPosterior.fit(phi, chosen, obs, 0.01)
        data = ObservationDataset(num_players=2)
        for idx, y in zip(chosen, obs.T):
            data.append(spec.profile(idx), y)
        wp = weight_posterior(fm, data, 0, 0.01)
        for g in range(spec.grid_size):
            mean, var = weight_space_posterior_at(wp, fm, spec.grid_flat[g])
            assert shared.variance[g] == pytest.approx(var, rel=1e-8, abs=1e-10)
            assert shared.value_means()[0, g] == pytest.approx(mean, rel=1e-8, abs=1e-10)

    def test_sample_weights_distribution(self, rng):
        # moments of the factored sampler match the dense posterior covariance
        dim = 6
        phi = rng.normal(size=(10, dim))
        obs = rng.normal(size=(1, 4))
        chosen = [0, 2, 5, 7]
        s2 = 0.5
        shared = SharedPosterior.fit(phi, chosen, obs, s2)
        draws = shared.sample_weights(0, np.random.default_rng(0), 40_000)
        psi = phi[chosen]
        sigma = psi.T @ psi + s2 * np.eye(dim)
        expected_cov = s2 * np.linalg.inv(sigma)
        expected_mean = np.linalg.solve(sigma, psi.T @ obs[0])
        np.testing.assert_allclose(draws.mean(axis=0), expected_mean, atol=0.02)
        np.testing.assert_allclose(np.cov(draws.T), expected_cov, atol=0.03)
