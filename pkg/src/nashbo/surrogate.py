"""Dual-form utility surrogate.

Two algebraically equivalent views of the same Bayesian model: a
kernel-space GP with an RBF kernel, and a finite-dimensional Bayesian
linear model over random Fourier features.  When the kernel is taken to
be the exact feature inner product the two posteriors coincide, which is
the core consistency check of this module.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NumericError
from .games import ObservationDataset

JITTER_SEQUENCE = (1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class KernelConfig:
    lengthscale: float = 0.85
    noise_var: float = 0.67

    def __post_init__(self):
        if self.lengthscale <= 0 or self.noise_var <= 0:
            raise ValueError("kernel parameters must be positive")


def rbf_kernel(x: np.ndarray, x2: np.ndarray, cfg: KernelConfig) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    d2 = float(np.sum((x - x2) ** 2))
    return float(np.exp(-d2 / (2.0 * cfg.lengthscale**2)))


def rbf_gram(xa: np.ndarray, xb: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    d2 = (
        np.sum(xa**2, axis=1)[:, None]
        + np.sum(xb**2, axis=1)[None, :]
        - 2.0 * xa @ xb.T
    )
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * cfg.lengthscale**2))


@dataclass(frozen=True)
class RffFeatureMap:
    """Random cosine features approximating the RBF kernel.

    One map is drawn per experiment and shared by every player, which is
    what makes the posterior variance literally player-independent.
    Frequencies follow the RBF spectral measure (per-coordinate std 1/l).
    """

    frequencies: np.ndarray  # (D, d)
    phases: np.ndarray  # (D,)
    lengthscale: float

    @property
    def dim(self) -> int:
        return self.frequencies.shape[0]

    @property
    def input_dim(self) -> int:
        return self.frequencies.shape[1]

    @classmethod
    def draw(cls, dim: int, input_dim: int, lengthscale: float, rng: np.random.Generator):
        """Coupled low-variance draw.

        Distinct frequencies come in orthogonalized blocks with
        chi-resampled row norms, so each row is marginally exact for the
        RBF spectral measure; every frequency is then used by a quadrature
        phase pair (b, b + 3*pi/2), which cancels the phase-noise term of
        the cosine estimator.  The coupling only reduces approximation
        variance; the feature form is unchanged.
        """
        n_freq = (dim + 1) // 2
        rows = []
        count = 0
        while count < n_freq:
            gauss = rng.standard_normal((input_dim, input_dim))
            q, _ = np.linalg.qr(gauss)
            k = min(input_dim, n_freq - count)
            norms = np.sqrt(rng.chisquare(input_dim, size=k))
            rows.append((q[:, :k] * norms[None, :]).T)
            count += k
        w = np.vstack(rows)[:n_freq] / lengthscale
        base = rng.uniform(0.0, 2.0 * np.pi, size=n_freq)
        n_odd = dim // 2
        freq = np.empty((dim, input_dim))
        phases = np.empty(dim)
        freq[0::2] = w
        phases[0::2] = base
        freq[1::2] = w[:n_odd]
        phases[1::2] = (base[:n_odd] + 1.5 * np.pi) % (2.0 * np.pi)
        return cls(frequencies=freq, phases=phases, lengthscale=lengthscale)

    def features(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.sqrt(2.0 / self.dim) * np.cos(self.frequencies @ x + self.phases)

    def features_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return np.sqrt(2.0 / self.dim) * np.cos(xs @ self.frequencies.T + self.phases[None, :])

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "input_dim": self.input_dim,
            "lengthscale": self.lengthscale,
            "frequencies_b64": base64.b64encode(
                np.ascontiguousarray(self.frequencies, dtype="<f8").tobytes()
            ).decode("ascii"),
            "phases_b64": base64.b64encode(
                np.ascontiguousarray(self.phases, dtype="<f8").tobytes()
            ).decode("ascii"),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RffFeatureMap":
        dim, input_dim = int(doc["dim"]), int(doc["input_dim"])
        freq = np.frombuffer(base64.b64decode(doc["frequencies_b64"]), dtype="<f8").reshape(
            dim, input_dim
        )
        phases = np.frombuffer(base64.b64decode(doc["phases_b64"]), dtype="<f8")
        return cls(
            frequencies=freq.copy(), phases=phases.copy(), lengthscale=float(doc["lengthscale"])
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "RffFeatureMap":
        return cls.from_json(json.loads(Path(path).read_text()))


def rff_features(feature_map: RffFeatureMap, x: np.ndarray) -> np.ndarray:
    return feature_map.features(x)


# ---------------------------------------------------------------------------
# Kernel-space posterior


@dataclass
class GpPosterior:
    """Exact GP regression posterior over the shared query history, one
    observation row per player."""

    train_x: np.ndarray  # (t, d)
    train_y: np.ndarray  # (N, t)
    noise_var: float
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray]
    prior_var: float = 1.0
    chol: np.ndarray | None = None
    alpha: np.ndarray | None = None  # (N, t) solves of (K + s2 I)^-1 y

    @classmethod
    def fit(
        cls,
        train_x: np.ndarray,
        train_y: np.ndarray,
        cfg: KernelConfig | None = None,
        kernel: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
        prior_var: float | None = None,
    ) -> "GpPosterior":
        cfg = cfg or KernelConfig()
        if kernel is None:
            kernel = lambda a, b: rbf_gram(a, b, cfg)  # noqa: E731
        train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
        train_y = np.atleast_2d(np.asarray(train_y, dtype=float))
        t = train_x.shape[0]
        gp = cls(
            train_x=train_x,
            train_y=train_y,
            noise_var=cfg.noise_var,
            kernel=kernel,
            prior_var=prior_var if prior_var is not None else 1.0,
        )
        if t == 0:
            return gp
        gram = kernel(train_x, train_x)
        gp.prior_var = float(gram[0, 0]) if prior_var is None else prior_var
        sys = gram + cfg.noise_var * np.eye(t)
        gp.chol = _cholesky_with_jitter(sys)
        gp.alpha = np.linalg.solve(sys, train_y.T).T
        return gp

    @property
    def size(self) -> int:
        return self.train_x.shape[0]


def _cholesky_with_jitter(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, escalating jitter 1e-10 -> 1e-8 -> 1e-6."""
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(mat)))
    for jitter in JITTER_SEQUENCE:
        try:
            return np.linalg.cholesky(mat + jitter * scale * np.eye(mat.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NumericError("Cholesky factorization failed after jitter escalation")


def gp_posterior_at(gp: GpPosterior, player: int, x: np.ndarray) -> tuple[float, float]:
    """Posterior (mean, variance) of one player's utility at x."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if gp.size == 0:
        prior = gp.kernel(x, x)[0, 0]
        return 0.0, float(prior)
    k_t = gp.kernel(gp.train_x, x)[:, 0]
    mean = float(k_t @ gp.alpha[player])
    sol = np.linalg.solve(gp.chol, k_t)
    var = float(gp.kernel(x, x)[0, 0] - sol @ sol)
    return mean, max(var, 0.0)


# ---------------------------------------------------------------------------
# Weight-space posterior


@dataclass
class WeightPosterior:
    """Gaussian posterior over feature weights: N(mean, noise_var *
    precision_like^-1) with precision_like = Psi^T Psi + noise_var * I."""

    mean: np.ndarray  # (D,)
    precision_like: np.ndarray  # (D, D)
    noise_var: float
    train_features: np.ndarray  # (t, D)
    train_y: np.ndarray  # (t,)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def size(self) -> int:
        return self.train_features.shape[0]


def weight_posterior(
    feature_map: RffFeatureMap,
    data: ObservationDataset,
    player: int,
    noise_var: float,
) -> WeightPosterior:
    """Fit one player's weight posterior from the shared history."""
    d = feature_map.dim
    if data.size == 0:
        psi = np.empty((0, d))
        y = np.empty(0)
    else:
        psi = feature_map.features_many(data.inputs())
        y = np.asarray(data.observations[player], dtype=float)
    sigma = psi.T @ psi + noise_var * np.eye(d)
    mean = np.linalg.solve(sigma, psi.T @ y) if data.size else np.zeros(d)
    return WeightPosterior(
        mean=mean, precision_like=sigma, noise_var=noise_var, train_features=psi, train_y=y
    )


def weight_space_posterior_at(
    wp: WeightPosterior, feature_map: RffFeatureMap, x: np.ndarray
) -> tuple[float, float]:
    """(mean, variance) of the function value psi(x)^T theta under the
    weight posterior; equals the kernel-space posterior when the kernel is
    the exact feature inner product."""
    psi = feature_map.features(x)
    mean = float(psi @ wp.mean)
    var = wp.noise_var * float(psi @ np.linalg.solve(wp.precision_like, psi))
    return mean, max(var, 0.0)
