"""Multivariate Gaussian over weight space with box-clamped sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

_LOG_2PI = np.log(2.0 * np.pi)


class DegenerateDistribution(np.linalg.LinAlgError):
    """Covariance could not be factored even after jitter."""


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @classmethod
    def uniform(cls, low, high, dim):
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))

    @property
    def dim(self):
        return self.lower.shape[0]

    def clip(self, w):
        return np.clip(w, self.lower, self.upper)

    def contains(self, w):
        w = np.asarray(w)
        return bool(np.all((w >= self.lower) & (w <= self.upper)))


@dataclass(frozen=True)
class GaussianParams:
    """Mean and covariance ``theta = (mu, Sigma)``."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float)).copy()
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float)).copy()
        if sigma.shape != (mu.shape[0], mu.shape[0]):
            raise ValueError(f"sigma shape {sigma.shape} does not match mu of length {mu.shape[0]}")
        scale = max(np.max(np.abs(sigma)), 1e-300)
        if np.max(np.abs(sigma - sigma.T)) > 1e-12 * scale:
            raise ValueError("sigma is not symmetric")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self):
        return self.mu.shape[0]

    @classmethod
    def isotropic(cls, dim, variance=1.0, mean=None):
        mu = np.zeros(dim) if mean is None else mean
        return cls(mu, variance * np.eye(dim))

    def spectral_norm(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.sigma))))

    def is_psd(self) -> bool:
        ev = np.linalg.eigvalsh(self.sigma)
        return bool(ev.min() >= -1e-10 * max(np.trace(self.sigma), 1e-300))

    def to_dict(self):
        return {"mu": self.mu.tolist(), "sigma": self.sigma.ravel().tolist(), "dim": self.dim}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        d = int(data.get("dim", len(data["mu"])))
        return cls(np.asarray(data["mu"], dtype=float), np.asarray(data["sigma"], dtype=float).reshape(d, d))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def cholesky_factor(sigma) -> np.ndarray:
    """Lower Cholesky factor of ``sigma``.

    If ``sigma`` is not numerically positive definite the factorization is
    retried on ``sigma + 1e-10 * trace/D * I``; a second failure raises
    :class:`DegenerateDistribution`.
    """
    sigma = np.asarray(sigma, dtype=float)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    d = sigma.shape[0]
    jitter = max(1e-10 * np.trace(sigma) / d, 1e-300)
    try:
        return np.linalg.cholesky(sigma + jitter * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise DegenerateDistribution(str(exc)) from exc


def log_density(params: GaussianParams, w) -> np.ndarray:
    """Log of the (untruncated) Gaussian density at each row of ``w``."""
    w = np.asarray(w, dtype=float)
    chol = cholesky_factor(params.sigma)
    diff = np.atleast_2d(w - params.mu)
    z = solve_triangular(chol, diff.T, lower=True)
    maha = np.sum(z * z, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    out = -0.5 * (params.dim * _LOG_2PI + log_det + maha)
    return out if w.ndim > 1 else out[0]


def density(params: GaussianParams, w):
    return np.exp(log_density(params, w))


def sample(params: GaussianParams, count: int, support: Box, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` weight vectors and clamp them into ``support``."""
    if count < 1:
        raise ValueError("count must be positive")
    if support.dim != params.dim:
        raise ValueError("support dimension does not match the distribution")
    chol = cholesky_factor(params.sigma)
    z = rng.standard_normal((count, params.dim))
    return support.clip(params.mu + z @ chol.T)
