"""Multi-cell MIMO downlink power-control game.

Generates a frozen network instance (topology + channels) following the
TR 38.901 UMi street-canyon statistics and wraps the discounted
sum-spectral-efficiency utility as a black-box oracle over a finite
power grid.  Channel magnitudes combine pathloss, lognormal shadowing
and unit-variance circularly-symmetric fast fading.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError
from .games import GameSpec, UtilityOracle, ActionProfile, lattice_actions, product_grid

LOS_SHADOW_STD_DB = 4.0
NLOS_SHADOW_STD_DB = 7.82


@dataclass(frozen=True)
class NetworkConfig:
    num_bs: int = 7
    num_ue_per_bs: int = 10
    tx_antennas: int = 16
    rx_antennas: int = 4
    cell_radius_m: float = 200.0
    ue_distance_interval_m: tuple[float, float] = (20.0, 200.0)
    p_max_watt: float = 6.5
    noise_power_dbm: float = -86.46
    discount: float = 0.1
    carrier_ghz: float = 3.5
    topology_seed: int = 0
    channel_seed: int = 0

    def __post_init__(self):
        if self.tx_antennas < self.rx_antennas or self.rx_antennas < 1:
            raise ConfigError("need tx_antennas >= rx_antennas >= 1")
        if self.p_max_watt <= 0:
            raise ConfigError("p_max_watt must be positive")
        lo, hi = self.ue_distance_interval_m
        if not (0 < lo <= hi <= self.cell_radius_m):
            raise ConfigError("ue_distance_interval must lie within (0, cell_radius]")
        if self.discount < 0:
            raise ConfigError("discount must be nonnegative")

    @property
    def noise_power_linear(self) -> float:
        return 10.0 ** (self.noise_power_dbm / 10.0)

    def to_json(self) -> dict:
        d = asdict(self)
        d["ue_distance_interval_m"] = list(self.ue_distance_interval_m)
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "NetworkConfig":
        d = dict(doc)
        if "ue_distance_interval_m" in d:
            d["ue_distance_interval_m"] = tuple(d["ue_distance_interval_m"])
        return cls(**d)


@dataclass(frozen=True)
class Topology:
    """Planar layout: BS n at bs_positions[n], UE m of cell n at
    ue_positions[n, m]; UE m of cell n is served by BS n."""

    bs_positions: np.ndarray  # (N, 2)
    ue_positions: np.ndarray  # (N, M, 2)


@dataclass(frozen=True)
class ChannelSet:
    """One channel matrix per (transmitting BS, victim cell, victim UE)
    link, plus the per-link large-scale terms behind it."""

    h: np.ndarray  # (N, N, M, N_R, N_T) complex
    pathloss_db: np.ndarray  # (N, N, M)
    los_flag: np.ndarray  # (N, N, M) bool
    shadowing_db: np.ndarray  # (N, N, M)


def _hex_lattice(n: int, spacing: float) -> np.ndarray:
    """First n points of a hexagonal lattice around the origin, ordered by
    (radius, angle) so layouts are deterministic and nested."""
    pts = [(0.0, 0.0)]
    ring = 1
    while len(pts) < n:
        cur = (ring, 0)  # axial coordinates; walk the six edges of the ring
        ring_pts = []
        for dq, dr in [(-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)]:
            for _ in range(ring):
                q, r = cur
                x = spacing * (q + r / 2.0)
                y = spacing * (np.sqrt(3) / 2.0) * r
                ring_pts.append((x, y))
                cur = (q + dq, r + dr)
        ring_pts.sort(key=lambda p: (round(np.hypot(*p), 9), round(np.arctan2(p[1], p[0]), 9)))
        pts.extend(ring_pts)
        ring += 1
    return np.array(pts[:n])


def generate_topology(cfg: NetworkConfig) -> Topology:
    """BS sites on a hexagonal-like lattice with inter-site distance twice
    the cell radius; UE distances uniform in the configured interval and
    angles uniform, all reproducible from topology_seed."""
    rng = np.random.default_rng(cfg.topology_seed)
    bs = _hex_lattice(cfg.num_bs, 2.0 * cfg.cell_radius_m)
    lo, hi = cfg.ue_distance_interval_m
    r = rng.uniform(lo, hi, size=(cfg.num_bs, cfg.num_ue_per_bs))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(cfg.num_bs, cfg.num_ue_per_bs))
    ue = bs[:, None, :] + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    return Topology(bs_positions=bs, ue_positions=ue)


def pathloss_db(d_m: float, los: bool, fc_ghz: float) -> float:
    """UMi street-canyon pathloss in dB; the NLOS branch is floored by the
    LOS value."""
    if d_m <= 0:
        raise ValueError("distance must be positive")
    pl_los = 32.4 + 21.0 * np.log10(d_m) + 20.0 * np.log10(fc_ghz)
    if los:
        return float(pl_los)
    pl_nlos = 35.3 * np.log10(d_m) + 22.4 + 21.3 * np.log10(fc_ghz)
    return float(max(pl_los, pl_nlos))


def los_probability(d_m: float) -> float:
    """UMi street-canyon line-of-sight probability."""
    if d_m <= 18.0:
        return 1.0
    return 18.0 / d_m + np.exp(-d_m / 36.0) * (1.0 - 18.0 / d_m)


def sample_channels(cfg: NetworkConfig, topo: Topology) -> ChannelSet:
    """Draw every (BS -> UE) link: LOS state, shadowing, pathloss and fast
    fading, reproducible from channel_seed."""
    rng = np.random.default_rng(cfg.channel_seed)
    n, m = cfg.num_bs, cfg.num_ue_per_bs
    nr, nt = cfg.rx_antennas, cfg.tx_antennas
    # distance from transmitting BS src to UE (cell, ue)
    d = np.linalg.norm(
        topo.ue_positions[None, :, :, :] - topo.bs_positions[:, None, None, :], axis=-1
    )  # (N_src, N, M)
    p_los = np.where(d <= 18.0, 1.0, 18.0 / d + np.exp(-d / 36.0) * (1.0 - 18.0 / d))
    los = rng.random(size=d.shape) < p_los
    pl_los = 32.4 + 21.0 * np.log10(d) + 20.0 * np.log10(cfg.carrier_ghz)
    pl_nlos = np.maximum(pl_los, 35.3 * np.log10(d) + 22.4 + 21.3 * np.log10(cfg.carrier_ghz))
    pl = np.where(los, pl_los, pl_nlos)
    shadow_std = np.where(los, LOS_SHADOW_STD_DB, NLOS_SHADOW_STD_DB)
    s_db = shadow_std * rng.standard_normal(size=d.shape)
    beta = 10.0 ** (-s_db / 20.0)
    g = (
        rng.standard_normal(size=(n, n, m, nr, nt))
        + 1j * rng.standard_normal(size=(n, n, m, nr, nt))
    ) / np.sqrt(2.0)
    amp = (10.0 ** (-pl / 20.0)) * beta
    h = amp[..., None, None] * g
    return ChannelSet(h=h, pathloss_db=pl, los_flag=los, shadowing_db=s_db)


def _outer_products(ch: ChannelSet) -> np.ndarray:
    """O[src, n, m] = H H^H for the link (src BS -> UE m of cell n)."""
    return np.einsum("snmij,snmkj->snmik", ch.h, np.conj(ch.h))


def interference_covariance(
    x: ActionProfile, ch: ChannelSet, n: int, m: int, cfg: NetworkConfig
) -> np.ndarray:
    """Interference-plus-noise covariance at UE m of cell n: noise floor,
    the serving BS's other streams (through the victim's own channel), and
    every other BS's total power through its channel to this UE."""
    if not np.all(np.isfinite(ch.h)):
        raise NumericError("channel set contains non-finite entries")
    p = x.values
    nr = cfg.rx_antennas
    gamma = cfg.noise_power_linear * np.eye(nr, dtype=complex)
    own = ch.h[n, n, m]
    gamma = gamma + (p[n].sum() - p[n, m]) * (own @ own.conj().T)
    for src in range(cfg.num_bs):
        if src == n:
            continue
        hh = ch.h[src, n, m]
        gamma = gamma + p[src].sum() * (hh @ hh.conj().T)
    return gamma


def utility(x: ActionProfile, ch: ChannelSet, n: int, cfg: NetworkConfig) -> float:
    """Discounted sum spectral efficiency of BS n at profile x, in nats."""
    p = x.values
    total = -cfg.discount * p[n].sum()
    eye = np.eye(cfg.rx_antennas, dtype=complex)
    for m in range(cfg.num_ue_per_bs):
        gamma = interference_covariance(x, ch, n, m, cfg)
        own = ch.h[n, n, m]
        inner = eye + p[n, m] * np.linalg.solve(gamma, own @ own.conj().T)
        sign, logdet = np.linalg.slogdet(inner)
        if not np.isfinite(logdet):
            raise NumericError("log-det of the rate matrix is not finite")
        total += logdet
    return float(total)


def utilities_batch(profiles: np.ndarray, ch: ChannelSet, cfg: NetworkConfig) -> np.ndarray:
    """True utilities for a (G, N, M) stack of profiles, shape (G, N).

    Uses log det(Gamma + x H H^H) - log det(Gamma); the signal-plus-
    interference matrix depends on row sums only, which keeps the batch
    dense-linear-algebra friendly.
    """
    outer = _outer_products(ch)  # (N_src, N, M, NR, NR)
    g_count = profiles.shape[0]
    n, m = cfg.num_bs, cfg.num_ue_per_bs
    nr = cfg.rx_antennas
    row_sums = profiles.sum(axis=2)  # (G, N)
    eye = np.eye(nr, dtype=complex)
    full = np.einsum("gs,snmik->gnmik", row_sums.astype(complex), outer)
    full += cfg.noise_power_linear * eye
    own_outer = outer[np.arange(n), np.arange(n)]  # (N, M, NR, NR)
    gamma = full - np.einsum("gnm,nmik->gnmik", profiles.astype(complex), own_outer)
    sign_f, logdet_full = np.linalg.slogdet(full)
    sign_g, logdet_gamma = np.linalg.slogdet(gamma)
    if not (np.all(np.isfinite(logdet_full)) and np.all(np.isfinite(logdet_gamma))):
        raise NumericError("non-finite log-det in batch utility evaluation")
    rates = (logdet_full - logdet_gamma).sum(axis=2)  # (G, N)
    return rates - cfg.discount * row_sums


def power_game_oracle(
    cfg: NetworkConfig,
    points_per_dim: int = 3,
    max_profiles: int = 4096,
    noise_var: float = 0.67,
    noise_rng: np.random.Generator | None = None,
) -> tuple[UtilityOracle, GameSpec]:
    """Freeze one topology and channel draw and expose the power game as
    (oracle, spec) over a capped product grid of per-player lattices."""
    topo = generate_topology(cfg)
    ch = sample_channels(cfg, topo)
    actions = lattice_actions(
        cfg.num_ue_per_bs, 0.0, cfg.p_max_watt, points_per_dim, cap=cfg.p_max_watt
    )
    grid = product_grid([actions] * cfg.num_bs, max_profiles=max_profiles)
    spec = GameSpec(
        num_players=cfg.num_bs,
        per_player_dim=cfg.num_ue_per_bs,
        bounds=(0.0, cfg.p_max_watt),
        candidate_grid=grid,
        per_player_cap=cfg.p_max_watt,
    )

    def eval_fn(x: ActionProfile) -> np.ndarray:
        return utilities_batch(x.values[None], ch, cfg)[0]

    def eval_many(stack: np.ndarray) -> np.ndarray:
        return utilities_batch(stack, ch, cfg)

    oracle = UtilityOracle(
        eval=eval_fn,
        noise_std=float(np.sqrt(noise_var)),
        rng_stream=noise_rng if noise_rng is not None else np.random.default_rng(cfg.channel_seed + 1),
        spec=spec,
        eval_many=eval_many,
    )
    return oracle, spec


# ---------------------------------------------------------------------------
# Binary channel dump: uint32 ndim, ndim x uint32 dims, complex64 payload,
# everything little-endian.

_MAGIC = b"CHT1"


def dump_channels(ch: ChannelSet, path: str | Path) -> None:
    arr = np.ascontiguousarray(ch.h.astype(np.complex64))
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.astype("<c8").tobytes())


def load_channels(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError("not a channel tensor dump")
        (ndim,) = struct.unpack("<I", f.read(4))
        shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
        payload = f.read()
    return np.frombuffer(payload, dtype="<c8").reshape(shape)


def network_config_to_file(cfg: NetworkConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n")


def network_config_from_file(path: str | Path) -> NetworkConfig:
    return NetworkConfig.from_json(json.loads(Path(path).read_text()))
