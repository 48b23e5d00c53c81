"""Finite-grid multi-player games: profiles, oracles, regret, and the
brute-force equilibrium oracle.

A game is a pair (UtilityOracle, GameSpec).  The oracle maps a joint
action profile to one true utility per player and offers a noisy query
channel; the GameSpec fixes the feasible box, the optional per-player
cap, and the finite candidate grid over which every argmin/argmax in
this package runs.  Deviation sets are grid-restricted: player n may
deviate to any grid profile that keeps the other players' actions
fixed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ConstraintViolationError, GridSizeError

BOUNDS_TOL = 1e-9


@dataclass(frozen=True)
class ActionProfile:
    """Joint action x: row n holds player n's action vector (Watts for the
    power game)."""

    values: np.ndarray  # (N, M) float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"profile must be a 2-D matrix, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        """Profile as one d = N*M vector, the surrogate's input space."""
        return self.values.reshape(-1)

    def row(self, player: int) -> np.ndarray:
        return self.values[player]


@dataclass
class GameSpec:
    """Static description of a grid game.

    candidate_grid is a (G, N, M) array; its order is the tie-breaking
    order for every argmin/argmax in the package.
    """

    num_players: int
    per_player_dim: int
    bounds: tuple[float, float]
    candidate_grid: np.ndarray
    per_player_cap: float | None = None
    _groups: dict[int, tuple[np.ndarray, list[np.ndarray]]] = field(
        default_factory=dict, repr=False, compare=False
    )
    _index: dict[bytes, int] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.num_players < 2:
            raise ConfigError("a game needs at least 2 players")
        if self.per_player_dim < 1:
            raise ConfigError("per-player action dimension must be >= 1")
        grid = np.ascontiguousarray(np.asarray(self.candidate_grid, dtype=float))
        if grid.ndim != 3 or grid.shape[1] != self.num_players or grid.shape[2] != self.per_player_dim:
            raise ConfigError(
                f"candidate grid must have shape (G, {self.num_players}, "
                f"{self.per_player_dim}), got {grid.shape}"
            )
        if grid.shape[0] == 0:
            raise ConfigError("candidate grid is empty")
        self.candidate_grid = grid
        low, high = self.bounds
        if np.any(grid < low - BOUNDS_TOL) or np.any(grid > high + BOUNDS_TOL):
            raise ConfigError("grid profile outside bounds")
        if self.per_player_cap is not None:
            if np.any(grid.sum(axis=2) > self.per_player_cap + BOUNDS_TOL):
                raise ConfigError("grid profile violates the per-player cap")

    @property
    def grid_size(self) -> int:
        return self.candidate_grid.shape[0]

    @property
    def grid_flat(self) -> np.ndarray:
        """Grid as (G, N*M) feature inputs."""
        return self.candidate_grid.reshape(self.grid_size, -1)

    def validate_profile(self, x: ActionProfile) -> None:
        v = x.values
        if v.shape != (self.num_players, self.per_player_dim):
            raise ConstraintViolationError(
                f"profile shape {v.shape} does not match "
                f"({self.num_players}, {self.per_player_dim})"
            )
        low, high = self.bounds
        if np.any(v < low - BOUNDS_TOL) or np.any(v > high + BOUNDS_TOL):
            raise ConstraintViolationError("profile entry outside bounds")
        if self.per_player_cap is not None and np.any(
            v.sum(axis=1) > self.per_player_cap + BOUNDS_TOL
        ):
            raise ConstraintViolationError(
                f"row sum exceeds per-player cap {self.per_player_cap}"
            )

    def profile_index(self, x: ActionProfile) -> int:
        """Grid index of x, or raise when x is not a grid member."""
        if self._index is None:
            self._index = {
                self.candidate_grid[g].tobytes(): g for g in range(self.grid_size)
            }
        key = np.ascontiguousarray(x.values, dtype=float).tobytes()
        try:
            return self._index[key]
        except KeyError:
            raise ConstraintViolationError("profile is not on the candidate grid") from None

    def profile(self, g: int) -> ActionProfile:
        return ActionProfile(self.candidate_grid[g].copy())

    def deviation_groups(self, player: int) -> tuple[np.ndarray, list[np.ndarray]]:
        """Partition grid indices by the non-deviating players' actions.

        Returns (group_id per grid index, member-index array per group);
        members are ascending, so first-occurrence argmax respects the
        grid tie-break order.
        """
        cached = self._groups.get(player)
        if cached is not None:
            return cached
        others = np.delete(self.candidate_grid, player, axis=1).reshape(self.grid_size, -1)
        _, gid = np.unique(others, axis=0, return_inverse=True)
        gid = gid.astype(np.int64)
        order = np.argsort(gid, kind="stable")
        boundaries = np.flatnonzero(np.diff(gid[order])) + 1
        members = [np.sort(part) for part in np.split(order, boundaries)]
        # index members by their group id
        ngroups = int(gid.max()) + 1
        by_group: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * ngroups
        for part in members:
            by_group[gid[part[0]]] = part
        result = (gid, by_group)
        self._groups[player] = result
        return result

    def deviation_members(self, g: int, player: int) -> np.ndarray:
        gid, by_group = self.deviation_groups(player)
        return by_group[gid[g]]


@dataclass
class UtilityOracle:
    """Black-box utility access: true evaluation plus a noisy channel.

    eval is deterministic for a fixed instance; rng_stream only feeds the
    observation noise and is the single mutable piece of state.
    """

    eval: Callable[[ActionProfile], np.ndarray]
    noise_std: float
    rng_stream: np.random.Generator
    spec: GameSpec | None = None
    eval_many: Callable[[np.ndarray], np.ndarray] | None = None

    def evaluate_grid(self, spec: GameSpec) -> np.ndarray:
        """True utilities on the whole grid, shape (G, N)."""
        if self.eval_many is not None:
            return np.asarray(self.eval_many(spec.candidate_grid), dtype=float)
        return np.stack(
            [np.asarray(self.eval(spec.profile(g)), dtype=float) for g in range(spec.grid_size)]
        )


@dataclass
class ObservationDataset:
    """Query history shared by all players: profiles X_t plus the (N, t)
    matrix of noisy values, rows aligned to the same profile order."""

    num_players: int
    profiles: list[ActionProfile] = field(default_factory=list)
    observations: np.ndarray | None = None

    def __post_init__(self):
        if self.observations is None:
            self.observations = np.empty((self.num_players, 0))

    @property
    def size(self) -> int:
        return len(self.profiles)

    def append(self, x: ActionProfile, y: np.ndarray) -> None:
        y = np.asarray(y, dtype=float).reshape(self.num_players, 1)
        self.profiles.append(x)
        self.observations = np.concatenate([self.observations, y], axis=1)

    def inputs(self) -> np.ndarray:
        """Profiles flattened to (t, N*M) surrogate inputs."""
        if not self.profiles:
            return np.empty((0, 0))
        return np.stack([p.flat for p in self.profiles])


@dataclass(frozen=True)
class EquilibriumReport:
    """Grid-search equilibrium summary: the smallest attainable tolerance
    and every profile attaining it."""

    epsilon_star: float
    epsilon_pne_profiles: list[int]
    per_profile_max_regret: np.ndarray

    def to_dict(self, spec: GameSpec) -> dict:
        return {
            "epsilon_star": float(self.epsilon_star),
            "epsilon_pne_profiles": [
                {"grid_index": int(g), "profile": spec.candidate_grid[g].tolist()}
                for g in self.epsilon_pne_profiles
            ],
            "per_profile_max_regret": [float(v) for v in self.per_profile_max_regret],
        }


def noisy_observe(oracle: UtilityOracle, x: ActionProfile) -> np.ndarray:
    """One noisy query: u(x) plus independent zero-mean Gaussian noise per
    player, drawn from the oracle's stream (the only state change)."""
    if oracle.spec is not None:
        oracle.spec.validate_profile(x)
    u = np.asarray(oracle.eval(x), dtype=float)
    if oracle.noise_std == 0.0:
        return u
    return u + oracle.noise_std * oracle.rng_stream.standard_normal(u.shape)


def true_regret(oracle: UtilityOracle, spec: GameSpec, x: ActionProfile, player: int) -> float:
    """Best unilateral deviation gain for one player at x, deviations
    restricted to grid members sharing x's other-player actions."""
    g = spec.profile_index(x)
    members = spec.deviation_members(g, player)
    base = float(np.asarray(oracle.eval(x), dtype=float)[player])
    best = max(float(np.asarray(oracle.eval(spec.profile(m)), dtype=float)[player]) for m in members)
    return best - base


def regret_matrix(utilities: np.ndarray, spec: GameSpec) -> np.ndarray:
    """Per-player regret of every grid profile, from a (G, N) utility table."""
    G, N = utilities.shape
    out = np.empty((N, G))
    for n in range(N):
        gid, by_group = spec.deviation_groups(n)
        ngroups = len(by_group)
        gmax = np.full(ngroups, -np.inf)
        np.maximum.at(gmax, gid, utilities[:, n])
        out[n] = gmax[gid] - utilities[:, n]
    return out


def epsilon_star(oracle: UtilityOracle, spec: GameSpec) -> EquilibriumReport:
    """Exhaustive grid search for the smallest epsilon with a nonempty
    epsilon-PNE set; lists every minimizer in grid order."""
    utilities = oracle.evaluate_grid(spec)
    per_profile = regret_matrix(utilities, spec).max(axis=0)
    eps = float(per_profile.min())
    minimizers = [int(g) for g in np.flatnonzero(per_profile == per_profile.min())]
    return EquilibriumReport(eps, minimizers, per_profile)


def is_epsilon_pne(oracle: UtilityOracle, spec: GameSpec, x: ActionProfile, eps: float) -> bool:
    """True when no player can gain more than eps by a grid deviation."""
    if eps < 0:
        raise ValueError("epsilon must be nonnegative")
    return all(true_regret(oracle, spec, x, n) <= eps for n in range(spec.num_players))


# ---------------------------------------------------------------------------
# Grid construction


def lattice_actions(
    dim: int,
    low: float,
    high: float,
    points_per_dim: int,
    cap: float | None = None,
) -> np.ndarray:
    """Per-player uniform lattice over the box, filtered by the cap.
    Returns an (A, dim) array in lexicographic order."""
    if points_per_dim < 1:
        raise ConfigError("points_per_dim must be >= 1")
    axis = np.linspace(low, high, points_per_dim) if points_per_dim > 1 else np.array([low])
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    actions = np.stack([m.reshape(-1) for m in mesh], axis=1)
    if cap is not None:
        actions = actions[actions.sum(axis=1) <= cap + BOUNDS_TOL]
    if actions.shape[0] == 0:
        raise ConfigError("no feasible per-player action after cap filtering")
    return actions


def _thin_evenly(count: int, target: int) -> np.ndarray:
    """Deterministic evenly-spaced index subset of size target."""
    if target >= count:
        return np.arange(count)
    return np.unique(np.round(np.linspace(0, count - 1, target)).astype(int))


def product_grid(per_player_actions: Sequence[np.ndarray], max_profiles: int) -> np.ndarray:
    """Joint grid as the Cartesian product of per-player action lists.

    When the product exceeds max_profiles, per-player lists are thinned by
    deterministic even spacing until the product fits; thinning per axis
    (rather than subsampling the joint product) keeps every deviation set
    a full slice of the grid.
    """
    counts = [a.shape[0] for a in per_player_actions]
    if max_profiles < 1:
        raise ConfigError("max_profiles must be >= 1")
    while math.prod(counts) > max_profiles:
        i = int(np.argmax(counts))
        if counts[i] <= 1:
            raise ConfigError("cannot thin grid below one action per player")
        counts[i] -= 1
    chosen = [
        a[_thin_evenly(a.shape[0], c)] for a, c in zip(per_player_actions, counts)
    ]
    idx_mesh = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    idx = np.stack([m.reshape(-1) for m in idx_mesh], axis=1)  # (G, N)
    grid = np.stack([chosen[n][idx[:, n]] for n in range(len(chosen))], axis=1)
    return np.ascontiguousarray(grid)


def equal_allocation_profile(spec: GameSpec) -> int:
    """Grid index closest (Frobenius) to the uniform allocation: cap split
    equally across coordinates when a cap exists, box midpoint otherwise."""
    low, high = spec.bounds
    if spec.per_player_cap is not None:
        coord = min(high, spec.per_player_cap / spec.per_player_dim)
        coord = max(coord, low)
    else:
        coord = 0.5 * (low + high)
    ref = np.full((spec.num_players, spec.per_player_dim), coord)
    d = np.linalg.norm(spec.candidate_grid - ref[None], axis=(1, 2))
    return int(np.argmin(d))


# ---------------------------------------------------------------------------
# Table-backed (normal-form) games


def table_game(
    payoffs: np.ndarray,
    action_values: Sequence[np.ndarray] | None = None,
    noise_std: float = 0.0,
    seed: int = 0,
    action_spacing: float = 2.0,
) -> tuple[UtilityOracle, GameSpec]:
    """Wrap a normal-form payoff table as (oracle, spec).

    payoffs has shape (N, q_1, ..., q_N).  Action index k of player n is
    embedded at scalar coordinate action_values[n][k] (default: multiples
    of action_spacing), which is what the surrogate sees.
    """
    payoffs = np.asarray(payoffs, dtype=float)
    n_players = payoffs.shape[0]
    if payoffs.ndim != n_players + 1:
        raise ConfigError(
            f"payoff table with {n_players} players must be {n_players + 1}-dimensional"
        )
    sizes = payoffs.shape[1:]
    if action_values is None:
        action_values = [action_spacing * np.arange(q, dtype=float) for q in sizes]
    values = [np.asarray(v, dtype=float).reshape(-1) for v in action_values]
    for q, v in zip(sizes, values):
        if v.shape[0] != q:
            raise ConfigError("action_values length mismatch with payoff table")
    per_player = [v.reshape(-1, 1) for v in values]
    grid = product_grid(per_player, max_profiles=int(math.prod(sizes)))
    low = float(min(v.min() for v in values))
    high = float(max(v.max() for v in values))
    spec = GameSpec(
        num_players=n_players,
        per_player_dim=1,
        bounds=(low, high),
        candidate_grid=grid,
    )

    lookup = [{float(v[k]): k for k in range(v.shape[0])} for v in values]

    def indices_of(x: ActionProfile) -> tuple[int, ...]:
        try:
            return tuple(lookup[n][float(x.values[n, 0])] for n in range(n_players))
        except KeyError:
            raise ConstraintViolationError("profile is not a table action") from None

    def eval_fn(x: ActionProfile) -> np.ndarray:
        idx = indices_of(x)
        return np.array([payoffs[(n, *idx)] for n in range(n_players)])

    def eval_many(grid_arr: np.ndarray) -> np.ndarray:
        out = np.empty((grid_arr.shape[0], n_players))
        for g in range(grid_arr.shape[0]):
            out[g] = eval_fn(ActionProfile(grid_arr[g]))
        return out

    oracle = UtilityOracle(
        eval=eval_fn,
        noise_std=noise_std,
        rng_stream=np.random.default_rng(seed),
        spec=spec,
        eval_many=eval_many,
    )
    return oracle, spec


def load_normal_form(source: str | Path | dict, noise_std: float = 0.0, seed: int = 0):
    """Load a normal-form game from a JSON document:
    {"players": N, "actions_per_player": [...], "payoffs": nested arrays,
     "action_values": optional per-player coordinate embeddings}.
    """
    if isinstance(source, (str, Path)):
        doc = json.loads(Path(source).read_text())
    else:
        doc = source
    try:
        n = int(doc["players"])
        sizes = [int(q) for q in doc["actions_per_player"]]
        payoffs = np.asarray(doc["payoffs"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid normal-form document: {exc}") from exc
    if payoffs.shape != (n, *sizes):
        raise ConfigError(
            f"payoffs shape {payoffs.shape} does not match (players, *actions_per_player)"
        )
    action_values = doc.get("action_values")
    if action_values is not None:
        action_values = [np.asarray(v, dtype=float) for v in action_values]
    return table_game(payoffs, action_values=action_values, noise_std=noise_std, seed=seed)


def game_spec_to_json(spec: GameSpec) -> dict:
    """Serialize a grid game spec with its explicit grid point list."""
    return {
        "players": spec.num_players,
        "per_player_dim": spec.per_player_dim,
        "bounds": [spec.bounds[0], spec.bounds[1]],
        "per_player_cap": spec.per_player_cap,
        "grid": spec.candidate_grid.tolist(),
    }


def game_spec_from_json(doc: dict) -> GameSpec:
    return GameSpec(
        num_players=int(doc["players"]),
        per_player_dim=int(doc["per_player_dim"]),
        bounds=(float(doc["bounds"][0]), float(doc["bounds"][1])),
        candidate_grid=np.asarray(doc["grid"], dtype=float),
        per_player_cap=None if doc.get("per_player_cap") is None else float(doc["per_player_cap"]),
    )


def prisoners_dilemma(noise_std: float = 0.0, seed: int = 0):
    """Action 0 = cooperate, 1 = defect; T=5, R=3, P=1, S=0."""
    u1 = np.array([[3.0, 0.0], [5.0, 1.0]])
    return table_game(np.stack([u1, u1.T]), noise_std=noise_std, seed=seed)


def matching_pennies(noise_std: float = 0.0, seed: int = 0):
    """Zero-sum +-1 game; no pure equilibrium."""
    u1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return table_game(np.stack([u1, -u1]), noise_std=noise_std, seed=seed)


def planted_pne_game(
    num_actions: int = 5,
    seed: int = 0,
    low: float = 0.0,
    high: float = 3.0,
    margin: float = 1.0,
    noise_std: float = 0.25,
    action_spacing: float = 2.0,
):
    """Random 2-player game with one strict pure equilibrium planted at a
    random cell: each planted payoff strictly beats its best alternative
    by at least margin.  Returns (oracle, spec, payoff_range)."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(low, high, size=(num_actions, num_actions))
    b = rng.uniform(low, high, size=(num_actions, num_actions))
    i_star = int(rng.integers(num_actions))
    j_star = int(rng.integers(num_actions))
    a[i_star, j_star] = a[:, j_star].max() + margin
    b[i_star, j_star] = b[i_star, :].max() + margin
    payoffs = np.stack([a, b])
    payoff_range = float(payoffs.max() - payoffs.min())
    oracle, spec = table_game(
        payoffs, noise_std=noise_std, seed=seed, action_spacing=action_spacing
    )
    return oracle, spec, payoff_range


MAX_EXHAUSTIVE_PROFILES = 1_000_000


def guard_grid_size(spec: GameSpec) -> None:
    """Refuse exhaustive evaluation beyond the guard, reporting the size."""
    if spec.grid_size > MAX_EXHAUSTIVE_PROFILES:
        raise GridSizeError(
            f"grid holds {spec.grid_size} profiles, above the exhaustive "
            f"guard of {MAX_EXHAUSTIVE_PROFILES}"
        )
