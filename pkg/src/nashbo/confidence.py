"""Prior-posterior ratio confidence sets and the derived utility and
regret intervals.

The set is defined by the ratio test l(theta) <= 1/delta, whose running
value is a nonnegative martingale under the data-generating model; by
Ville's inequality the sets cover the true weight vector at every time
simultaneously with probability >= 1 - delta.

The equivalent quadratic form is

    (1/s2) (theta - mu)^T Sigma (theta - mu) - ||theta||^2  <=  R,
    R = ln det Sigma - 2 ln(s^D delta) = sum_i ln(1 + e_i/s2) + 2 ln(1/delta),

with s2 the observation noise variance and e_i the eigenvalues of
Psi^T Psi.  (The widely quoted variant without the 1/s2 factor and with
2 ln det Sigma is not an equivalent rearrangement of the ratio test;
this module keeps the ratio as the single source of truth.)

Linear functionals psi^T theta are extremized over the set in closed
form when the set is a bounded ellipsoid (only possible once t >= D);
otherwise the set is unbounded and is intersected with the Gaussian
prior ball, and the extremes are bounded by a one-dimensional dual
search over the ball's multiplier.  Every evaluated multiplier yields a
valid outer bound, so the search can only tighten, never break,
coverage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .games import GameSpec
from .surrogate import RffFeatureMap, WeightPosterior

FLAG_ELLIPSOID = 0
FLAG_BALL = 1
FLAG_FALLBACK = 2
FLAG_NAMES = {FLAG_ELLIPSOID: "ellipsoid", FLAG_BALL: "ball", FLAG_FALLBACK: "fallback"}

_PD_TOL = 1e-9
_LAMBDA_GRID = np.logspace(-12.0, 14.0, 53)
_BISECT_STEPS = 60
_BISECT_TOL = 1e-8


@dataclass(frozen=True)
class ValueInterval:
    lower: float
    upper: float
    flag: str = "ellipsoid"

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def prior_ball_radius(dim: int, delta: float) -> float:
    """Radius holding a standard Gaussian vector with prob >= 1 - delta
    (chi-square upper tail bound)."""
    u = np.log(1.0 / delta)
    return float(np.sqrt(dim + 2.0 * np.sqrt(dim * u) + 2.0 * u))


@dataclass
class PprConfidenceSet:
    """One player's ratio-test confidence set in factored form.

    basis spans the data directions (right singular vectors of the
    feature matrix); gram_eigs are the matching eigenvalues of
    Psi^T Psi.  Directions outside basis carry eigenvalue zero.
    """

    mean: np.ndarray  # (D,)
    basis: np.ndarray  # (D, k) orthonormal columns
    gram_eigs: np.ndarray  # (k,) eigenvalues of Psi^T Psi, >= 0
    noise_var: float
    delta: float
    dim: int
    log_det_sigma: float = field(init=False)
    prior_ball_radius_: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0):
            raise ValueError("delta must lie in (0, 1]")
        self.gram_eigs = np.maximum(np.asarray(self.gram_eigs, dtype=float), 0.0)
        k = self.gram_eigs.shape[0]
        self.log_det_sigma = float(
            np.sum(np.log(self.gram_eigs + self.noise_var))
            + (self.dim - k) * np.log(self.noise_var)
        )
        self.prior_ball_radius_ = prior_ball_radius(self.dim, self.delta)

    # --- constructors -----------------------------------------------------

    @classmethod
    def from_features(
        cls, psi: np.ndarray, y: np.ndarray, noise_var: float, delta: float
    ) -> "PprConfidenceSet":
        psi = np.atleast_2d(np.asarray(psi, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        d = psi.shape[1]
        if psi.shape[0] == 0:
            return cls(
                mean=np.zeros(d),
                basis=np.empty((d, 0)),
                gram_eigs=np.empty(0),
                noise_var=noise_var,
                delta=delta,
                dim=d,
            )
        u, s, vt = np.linalg.svd(psi, full_matrices=False)
        mean = vt.T @ ((s / (s**2 + noise_var)) * (u.T @ y))
        return cls(
            mean=mean,
            basis=vt.T,
            gram_eigs=s**2,
            noise_var=noise_var,
            delta=delta,
            dim=d,
        )

    @classmethod
    def from_posterior(cls, wp: WeightPosterior, delta: float) -> "PprConfidenceSet":
        eigvals, eigvecs = np.linalg.eigh(wp.precision_like)
        return cls(
            mean=wp.mean,
            basis=eigvecs,
            gram_eigs=eigvals - wp.noise_var,
            noise_var=wp.noise_var,
            delta=delta,
            dim=wp.dim,
        )

    # --- derived quantities -----------------------------------------------

    @property
    def shape(self) -> np.ndarray:
        """Dense Sigma = Psi^T Psi + noise_var I (materialized on demand)."""
        w, s2 = self.basis, self.gram_eigs
        return self.noise_var * np.eye(self.dim) + (w * s2[None, :]) @ w.T

    @property
    def radius_rhs(self) -> float:
        """RHS of the quadratic membership form (exact rearrangement of the
        ratio test): sum ln(1 + e_i / noise_var) + 2 ln(1/delta)."""
        return float(
            np.sum(np.log1p(self.gram_eigs / self.noise_var)) + 2.0 * np.log(1.0 / self.delta)
        )

    def sigma_quadratic(self, v: np.ndarray) -> float:
        """v^T Sigma v in factored form."""
        proj = self.basis.T @ v
        return float(self.noise_var * (v @ v) + np.sum(self.gram_eigs * proj**2))

    def log_ratio(self, theta: np.ndarray) -> float:
        """ln l(theta): log prior density minus log posterior density."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        v = theta - self.mean
        return float(
            0.5 * self.dim * np.log(self.noise_var)
            - 0.5 * self.log_det_sigma
            - 0.5 * (theta @ theta)
            + self.sigma_quadratic(v) / (2.0 * self.noise_var)
        )

    def posterior_value_mean_var(self, psi: np.ndarray) -> tuple[float, float]:
        """(mean, variance) of psi^T theta under the weight posterior."""
        psi = np.asarray(psi, dtype=float).reshape(-1)
        p = self.basis.T @ psi
        mean = float(psi @ self.mean)
        var = float(
            self.noise_var * np.sum(p**2 / (self.gram_eigs + self.noise_var))
            + max(psi @ psi - p @ p, 0.0)
        )
        return mean, var


def ppr_ratio(wp: WeightPosterior, theta: np.ndarray) -> float:
    """Prior-posterior ratio at theta, evaluated in log space.

    Equals 1 for every theta before any data.  The returned value may
    overflow to inf for extreme theta; use log_ppr_ratio when composing.
    """
    return float(np.exp(log_ppr_ratio(wp, theta)))


def log_ppr_ratio(wp: WeightPosterior, theta: np.ndarray) -> float:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    sign, logdet = np.linalg.slogdet(wp.precision_like)
    v = theta - wp.mean
    return float(
        0.5 * wp.dim * np.log(wp.noise_var)
        - 0.5 * logdet
        - 0.5 * (theta @ theta)
        + (v @ (wp.precision_like @ v)) / (2.0 * wp.noise_var)
    )


def membership(conf: PprConfidenceSet, theta: np.ndarray) -> bool:
    """Ratio test l(theta) <= 1/delta."""
    return conf.log_ratio(theta) <= np.log(1.0 / conf.delta)


def quadratic_membership(conf: PprConfidenceSet, theta: np.ndarray) -> bool:
    """Quadratic-form test; agrees with the ratio test exactly."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    v = theta - conf.mean
    lhs = conf.sigma_quadratic(v) / conf.noise_var - float(theta @ theta)
    return lhs <= conf.radius_rhs


# ---------------------------------------------------------------------------
# Linear-functional extremization


@dataclass
class _DualWorkspace:
    """Per-set scalars shared by every query of one extremization batch."""

    a: np.ndarray  # (k,) eigenvalues of A = Sigma/noise_var - I on basis
    beta: np.ndarray  # (k,) span part of b = (Sigma/noise_var) mu
    mu_orth: np.ndarray  # (D,) orthogonal part of mu
    mu_orth_sq: float
    k0: float  # mu^T (Sigma/noise_var) mu
    radius: float  # quadratic RHS
    ball_r2: float


def _workspace(conf: PprConfidenceSet) -> _DualWorkspace:
    a = conf.gram_eigs / conf.noise_var
    m_w = conf.basis.T @ conf.mean
    mu_orth = conf.mean - conf.basis @ m_w
    beta = (1.0 + a) * m_w
    mu_orth_sq = float(mu_orth @ mu_orth)
    k0 = float(np.sum(beta * m_w) + mu_orth_sq)
    return _DualWorkspace(
        a=a,
        beta=beta,
        mu_orth=mu_orth,
        mu_orth_sq=mu_orth_sq,
        k0=k0,
        radius=conf.radius_rhs,
        ball_r2=conf.prior_ball_radius_**2,
    )


def _dual_terms(ws, p, co, q2, lam):
    """cross, v, rho and their lambda-derivatives for per-query lam.

    p: (Q, k) span projections; co: (Q,) psi . mu_orth; q2: (Q,)
    orthogonal mass; lam: (Q,) multipliers.  Returns (Q,) arrays.
    """
    denom = ws.a[None, :] + lam[:, None]  # (Q, k)
    inv = 1.0 / denom
    inv2 = inv * inv
    cross = (p * ws.beta[None, :] * inv).sum(axis=1) + co / lam
    dcross = -(p * ws.beta[None, :] * inv2).sum(axis=1) - co / lam**2
    v = (p**2 * inv).sum(axis=1) + q2 / lam
    dv = -(p**2 * inv2).sum(axis=1) - q2 / lam**2
    bmb = (ws.beta[None, :] ** 2 * inv).sum(axis=1) + ws.mu_orth_sq / lam
    dbmb = -(ws.beta[None, :] ** 2 * inv2).sum(axis=1) - ws.mu_orth_sq / lam**2
    rho = ws.radius - ws.k0 + lam * ws.ball_r2 + bmb
    drho = ws.ball_r2 + dbmb
    return cross, dcross, v, dv, rho, drho


def _dual_bound_batch(ws: _DualWorkspace, p: np.ndarray, co: np.ndarray, q2: np.ndarray, sign: float) -> np.ndarray:
    """Upper bound on sign * psi^T theta over the ball-intersected set,
    minimized over the dual multiplier per query."""
    q_count = p.shape[0]
    best = np.full(q_count, np.inf)
    grid_vals = np.empty((len(_LAMBDA_GRID), q_count))
    for j, lam_val in enumerate(_LAMBDA_GRID):
        lam = np.full(q_count, lam_val)
        cross, _, v, _, rho, _ = _dual_terms(ws, p, co, q2, lam)
        rho = np.maximum(rho, 0.0)
        g = sign * cross + np.sqrt(np.maximum(rho * v, 0.0))
        grid_vals[j] = g
        best = np.minimum(best, g)
    # refine around each query's grid minimizer by bisection on dg/dlam
    j_best = np.argmin(grid_vals, axis=0)
    lo = _LAMBDA_GRID[np.maximum(j_best - 1, 0)]
    hi = _LAMBDA_GRID[np.minimum(j_best + 1, len(_LAMBDA_GRID) - 1)]
    for _ in range(_BISECT_STEPS):
        mid = np.sqrt(lo * hi)
        cross, dcross, v, dv, rho, drho = _dual_terms(ws, p, co, q2, mid)
        rho_c = np.maximum(rho, 0.0)
        sq = np.sqrt(np.maximum(rho_c * v, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            dg = sign * dcross + np.where(sq > 0.0, (drho * v + rho_c * dv) / (2.0 * sq), 0.0)
        go_right = dg < 0.0
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.all(hi - lo <= _BISECT_TOL * np.maximum(lo, 1.0)):
            break
    lam = np.sqrt(lo * hi)
    cross, _, v, _, rho, _ = _dual_terms(ws, p, co, q2, lam)
    g = sign * cross + np.sqrt(np.maximum(np.maximum(rho, 0.0) * v, 0.0))
    return np.minimum(best, g)


def linear_bounds(
    conf: PprConfidenceSet,
    queries: np.ndarray,
    projections: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Extremes of psi^T theta over the confidence set for a (Q, D) batch
    of feature vectors.  Returns (lower, upper, flags).

    projections may carry precomputed (queries @ basis, row norms squared)
    so a shared basis is projected once per batch of players.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    ws = _workspace(conf)
    if projections is None:
        p = queries @ conf.basis  # (Q, k)
        psi_sq = np.sum(queries**2, axis=1)
    else:
        p, psi_sq = projections
    q2 = np.maximum(psi_sq - np.sum(p**2, axis=1), 0.0)
    co = queries @ ws.mu_orth
    q_count = queries.shape[0]

    bounded = conf.basis.shape[1] == conf.dim and (
        ws.a.size > 0 and float(ws.a.min()) > _PD_TOL
    )
    if bounded:
        inv_a = 1.0 / ws.a
        center = (p * ws.beta[None, :] * inv_a[None, :]).sum(axis=1)
        v0 = (p**2 * inv_a[None, :]).sum(axis=1)
        rho0 = ws.radius - ws.k0 + float(np.sum(ws.beta**2 * inv_a))
        half = np.sqrt(np.maximum(rho0, 0.0) * np.maximum(v0, 0.0))
        flags = np.full(q_count, FLAG_ELLIPSOID, dtype=np.uint8)
        return center - half, center + half, flags

    # unbounded raw set: intersect with the prior ball
    mu_norm = float(np.linalg.norm(conf.mean))
    feasible = mu_norm <= conf.prior_ball_radius_
    if not feasible:
        lam_probe = np.asarray(_LAMBDA_GRID)
        _, _, _, _, rho, _ = _dual_terms(
            ws,
            np.zeros((lam_probe.size, ws.a.size)),
            np.zeros(lam_probe.size),
            np.zeros(lam_probe.size),
            lam_probe,
        )
        feasible = bool(np.all(rho >= -1e-12 * max(1.0, abs(ws.radius))))
    if not feasible:
        mean, std = _posterior_value_batch(conf, queries, p, q2)
        width = np.sqrt(2.0 * np.log(2.0 / conf.delta)) * std
        flags = np.full(q_count, FLAG_FALLBACK, dtype=np.uint8)
        return mean - width, mean + width, flags

    upper = _dual_bound_batch(ws, p, co, q2, +1.0)
    lower = -_dual_bound_batch(ws, p, co, q2, -1.0)
    flags = np.full(q_count, FLAG_BALL, dtype=np.uint8)
    return lower, upper, flags


def _posterior_value_batch(conf, queries, p, q2):
    mean = queries @ conf.mean
    var = conf.noise_var * (p**2 / (conf.gram_eigs + conf.noise_var)[None, :]).sum(axis=1) + q2
    return mean, np.sqrt(np.maximum(var, 0.0))


def utility_interval(conf: PprConfidenceSet, feature_map: RffFeatureMap, x: np.ndarray) -> ValueInterval:
    """Confidence interval for one utility value psi(x)^T theta."""
    psi = feature_map.features(np.asarray(x, dtype=float).reshape(-1))
    lower, upper, flags = linear_bounds(conf, psi[None, :])
    return ValueInterval(float(lower[0]), float(upper[0]), FLAG_NAMES[int(flags[0])])


def regret_interval(
    sets: list[PprConfidenceSet],
    feature_map: RffFeatureMap,
    x,
    player: int,
    spec: GameSpec,
) -> ValueInterval:
    """Interval for one player's regret at a grid profile: deviations range
    over grid members sharing x's other-player actions."""
    g = spec.profile_index(x)
    members = spec.deviation_members(g, player)
    feats = feature_map.features_many(spec.grid_flat[members])
    own = feature_map.features(spec.grid_flat[g])
    lower_dev, upper_dev, flags_dev = linear_bounds(sets[player], feats)
    lower_own, upper_own, flag_own = linear_bounds(sets[player], own[None, :])
    lower = float(lower_dev.max() - upper_own[0])
    upper = float(upper_dev.max() - lower_own[0])
    flag = int(max(flags_dev.max(), flag_own[0]))
    return ValueInterval(min(lower, upper), upper, FLAG_NAMES[flag])
