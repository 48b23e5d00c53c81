"""Comparison policies sharing the acquisition plumbing.

The equilibrium-probability and confidence-bound baselines are desk-scale
reconstructions ("PE-style", "UCB-style"), not reimplementations of the
originals: the PE step scores grid profiles by the fraction of posterior
game draws in which they are approximate equilibria; the UCB step runs
the same report/explore loop with fixed-width Gaussian bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import (
    AcquisitionConfig,
    PprUcbSession,
    SharedPosterior,
    StepTrace,
)
from .games import (
    GameSpec,
    ObservationDataset,
    UtilityOracle,
    equal_allocation_profile,
    noisy_observe,
    regret_matrix,
)
from .surrogate import RffFeatureMap

import time


@dataclass(frozen=True)
class BaselineConfig:
    kind: str  # random | pe | ucb
    seed: int = 0
    mc_samples: int = 64
    beta: float = 4.0
    eps_relax: float | None = None  # None: track the posterior-mean game's best level

    def __post_init__(self):
        if self.kind not in ("random", "pe", "ucb"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.kind == "pe" and self.mc_samples < 1:
            raise ValueError("pe baseline needs mc_samples >= 1")
        if self.kind == "ucb" and self.beta < 0:
            raise ValueError("ucb baseline needs beta >= 0")


class UcbSession(PprUcbSession):
    """Same decision rules, Gaussian mean +- sqrt(beta) * std bounds."""

    kind = "ucb"

    def __init__(self, oracle, spec, cfg: AcquisitionConfig, beta: float = 4.0, rng=None):
        super().__init__(oracle, spec, cfg, rng=rng)
        self.beta = beta

    def _grid_bounds(self, shared: SharedPosterior):
        means = shared.value_means()
        half = np.sqrt(self.beta * shared.variance)[None, :]
        flags = np.full(means.shape, 255, dtype=np.uint8)  # not a set computation
        return None, means - half, means + half, flags


def ucb_policy_step(session: UcbSession) -> StepTrace:
    """One iteration of the confidence-bound baseline."""
    return session.step()


class RandomSession:
    """Uniform grid draws from the policy's own stream."""

    kind = "random"

    def __init__(
        self,
        oracle: UtilityOracle,
        spec: GameSpec,
        cfg: AcquisitionConfig,
        rng: np.random.Generator | None = None,
    ):
        self.oracle = oracle
        self.spec = spec
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.dataset = ObservationDataset(spec.num_players)
        self.init_idx = equal_allocation_profile(spec)
        self.last_chosen_idx = self.init_idx

    @property
    def initial_profile_idx(self) -> int:
        return self.init_idx

    def step(self) -> StepTrace:
        started = time.perf_counter()
        idx = int(self.rng.integers(self.spec.grid_size))
        profile = self.spec.profile(idx)
        y = noisy_observe(self.oracle, profile)
        self.dataset.append(profile, y)
        t = self.dataset.size - 1
        self.last_chosen_idx = idx
        n = self.spec.num_players
        zeros = np.zeros(n)
        return StepTrace(
            iteration=t,
            reported_idx=idx,
            worst_player=0,
            exploring_idx=idx,
            chosen_idx=idx,
            var_reported=0.0,
            var_exploring=0.0,
            regret_lower=zeros.copy(),
            regret_upper=zeros.copy(),
            util_lower=zeros.copy(),
            util_upper=zeros.copy(),
            observations=np.asarray(y, dtype=float),
            interval_flag="none",
            reported_profile=self.spec.candidate_grid[idx].copy(),
            exploring_profile=self.spec.candidate_grid[idx].copy(),
            chosen_profile=self.spec.candidate_grid[idx].copy(),
            elapsed_ms=(time.perf_counter() - started) * 1e3,
        )

    def final_profile(self):
        return self.spec.profile(self.last_chosen_idx)


def random_policy_step(session: RandomSession) -> int:
    """Uniform draw from the candidate grid; returns the grid index."""
    return int(session.rng.integers(session.spec.grid_size))


class PeSession:
    """Equilibrium-probability policy: score every grid profile by the
    fraction of posterior game draws in which it is an approximate
    equilibrium at the running tolerance."""

    kind = "pe"

    def __init__(
        self,
        oracle: UtilityOracle,
        spec: GameSpec,
        cfg: AcquisitionConfig,
        baseline: BaselineConfig,
        rng: np.random.Generator | None = None,
    ):
        self.oracle = oracle
        self.spec = spec
        self.cfg = cfg
        self.baseline = baseline
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.rng = rng
        self.feature_map = RffFeatureMap.draw(
            cfg.rff_dim, spec.num_players * spec.per_player_dim, cfg.lengthscale, rng
        )
        self.phi = cfg.prior_scale * self.feature_map.features_many(spec.grid_flat)
        self.dataset = ObservationDataset(spec.num_players)
        self.chosen: list[int] = []
        self.init_idx = equal_allocation_profile(spec)
        self.last_chosen_idx = self.init_idx

    @property
    def initial_profile_idx(self) -> int:
        return self.init_idx

    def _pne_fractions(self, shared: SharedPosterior) -> tuple[np.ndarray, float]:
        n, g_count = self.spec.num_players, self.spec.grid_size
        means = shared.value_means()  # (N, G)
        eps = self.baseline.eps_relax
        if eps is None:
            eps = float(regret_matrix(means.T, self.spec).max(axis=0).min())
        samples = self.baseline.mc_samples
        drawn = np.empty((n, samples, g_count))
        for player in range(n):
            thetas = shared.sample_weights(player, self.rng, samples)  # (S, D)
            drawn[player] = thetas @ self.phi.T
        hits = np.zeros(g_count)
        for s in range(samples):
            worst = regret_matrix(drawn[:, s, :].T, self.spec).max(axis=0)
            hits += worst <= eps
        return hits / samples, eps

    def step(self) -> StepTrace:
        started = time.perf_counter()
        t = len(self.chosen)
        shared = SharedPosterior.fit(
            self.phi, self.chosen, self.dataset.observations, self.cfg.noise_var
        )
        fractions, eps = self._pne_fractions(shared)
        idx = int(np.argmax(fractions))
        profile = self.spec.profile(idx)
        y = noisy_observe(self.oracle, profile)
        self.dataset.append(profile, y)
        self.chosen.append(idx)
        self.last_chosen_idx = idx
        n = self.spec.num_players
        zeros = np.zeros(n)
        return StepTrace(
            iteration=t,
            reported_idx=idx,
            worst_player=0,
            exploring_idx=idx,
            chosen_idx=idx,
            var_reported=float(shared.variance[idx]),
            var_exploring=float(shared.variance[idx]),
            regret_lower=zeros.copy(),
            regret_upper=np.full(n, eps),
            util_lower=zeros.copy(),
            util_upper=zeros.copy(),
            observations=np.asarray(y, dtype=float),
            interval_flag="none",
            reported_profile=self.spec.candidate_grid[idx].copy(),
            exploring_profile=self.spec.candidate_grid[idx].copy(),
            chosen_profile=self.spec.candidate_grid[idx].copy(),
            elapsed_ms=(time.perf_counter() - started) * 1e3,
        )

    def final_profile(self):
        return self.spec.profile(self.last_chosen_idx)


def pe_policy_step(session: PeSession) -> int:
    """Index the equilibrium-probability rule would pick right now."""
    shared = SharedPosterior.fit(
        session.phi, session.chosen, session.dataset.observations, session.cfg.noise_var
    )
    fractions, _ = session._pne_fractions(shared)
    return int(np.argmax(fractions))


def make_session(
    kind: str,
    oracle: UtilityOracle,
    spec: GameSpec,
    cfg: AcquisitionConfig,
    baseline: BaselineConfig | None = None,
    rng: np.random.Generator | None = None,
):
    """Policy factory used by the experiment harness."""
    if kind == "ppr_ucb":
        return PprUcbSession(oracle, spec, cfg, rng=rng)
    if kind == "ucb":
        beta = baseline.beta if baseline else 4.0
        return UcbSession(oracle, spec, cfg, beta=beta, rng=rng)
    if kind == "random":
        return RandomSession(oracle, spec, cfg, rng=rng)
    if kind == "pe":
        return PeSession(oracle, spec, cfg, baseline or BaselineConfig(kind="pe"), rng=rng)
    raise ValueError(f"unknown policy kind {kind!r}")
