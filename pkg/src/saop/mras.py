"""Model-reference adaptive search over policy weight vectors.

One iteration samples weight vectors from the current Gaussian, scores each
by simulation, moves the elite threshold, refits the Gaussian to the elite
samples with importance weights and blends it with the previous one.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .gaussian import DegenerateDistribution, GaussianParams, log_density, sample

log = logging.getLogger(__name__)

S_SHAPES = ("exp_neg", "reciprocal")


@dataclass
class SaopConfig:
    rho: float = 0.1
    epsilon: float = 0.1
    alpha: float = 0.1
    lam: float = 0.5
    n_initial: int = 50
    s_shape: str = "exp_neg"
    sigma_stop: float = 1e-3
    max_iterations: int = 100
    max_samples: int = 10_000
    seed: int = 0
    sigma0: float = 1.0
    stall_update: bool = True

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if self.n_initial < 1 or self.max_iterations < 1 or self.max_samples < 1:
            raise ValueError("n_initial, max_iterations and max_samples must be positive")
        if self.s_shape not in S_SHAPES:
            raise ValueError(f"s_shape must be one of {S_SHAPES}")
        if not self.sigma_stop > 0 or not self.sigma0 > 0:
            raise ValueError("sigma_stop and sigma0 must be positive")


@dataclass
class IterationRecord:
    k: int
    n_k: int
    kappa: float
    gamma: float
    rho: float
    branch: str
    best_j: float
    mean_j: float
    sigma_norm: float
    elites: int
    rejected_robust: int
    mu: np.ndarray = field(repr=False)


@dataclass
class SaopState:
    k: int
    theta: GaussianParams
    gamma: Optional[float]
    rho_current: float
    n_k: int
    history: list = field(default_factory=list)


@dataclass
class EliteSet:
    weights: np.ndarray
    costs: np.ndarray
    rejected_robust: int = 0

    def __len__(self):
        return self.weights.shape[0]


@dataclass
class ThresholdDecision:
    update: bool
    gamma: float
    rho: float
    n_next: int
    branch: str


@dataclass
class SaopResult:
    w_star: np.ndarray
    j_star: float
    best_w: np.ndarray
    best_j: float
    theta: GaussianParams
    iterations: int
    total_samples: int
    converged: bool
    status: str
    history: list
    seed: int
    wall_time: float = 0.0

    def to_dict(self, include_wall_time=True):
        out = {
            "w_star": self.w_star.tolist(),
            "j_star": self.j_star,
            "best_w": self.best_w.tolist(),
            "best_j": self.best_j,
            "iterations": self.iterations,
            "total_samples": self.total_samples,
            "converged": self.converged,
            "status": self.status,
            "sigma_norm": self.theta.spectral_norm(),
            "rejected_robust": [r.rejected_robust for r in self.history],
            "seed": self.seed,
        }
        if include_wall_time:
            out["wall_time"] = self.wall_time
        return out


def quantile_cost(costs, rho) -> float:
    """Sample ``(1 - rho)``-quantile with the worst-first ordering.

    Costs are sorted from worst to best (stable on sample order) and the
    entry at 1-based position ``ceil((1 - rho) N)`` is returned; position 0
    is clamped to 1.
    """
    costs = np.asarray(costs, dtype=float).ravel()
    if costs.size == 0:
        raise ValueError("empty cost list")
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    desc = costs[np.argsort(-costs, kind="stable")]
    return float(desc[_quantile_index(costs.size, rho) - 1])


def _quantile_index(n, rho):
    x = (1.0 - rho) * n
    return min(max(math.ceil(x - 1e-9 * max(1.0, x)), 1), n)


def threshold_update(kappa, state: SaopState, costs, epsilon, alpha) -> ThresholdDecision:
    """Decide how the elite threshold moves this iteration.

    Returns a decision whose ``update`` flag says whether the distribution
    parameters should be refit (False means keep them and grow the sample).
    """
    costs = np.asarray(costs, dtype=float).ravel()
    if costs.size == 0:
        raise ValueError("empty cost list")
    if state.k == 1 or state.gamma is None:
        return ThresholdDecision(True, float(kappa), state.rho_current, state.n_k, "init")
    target = state.gamma - epsilon
    if kappa <= target:
        return ThresholdDecision(True, float(kappa), state.rho_current, state.n_k, "improved")
    # largest h such that the h-th best cost clears the target; rho' = h / N
    asc = np.sort(costs, kind="stable")
    n = costs.size
    for h in range(n, 0, -1):
        if asc[h - 1] <= target:
            return ThresholdDecision(True, float(asc[h - 1]), h / n, state.n_k, "rho_search")
    return ThresholdDecision(False, state.gamma, state.rho_current, math.ceil((1 + alpha) * state.n_k), "stalled")


def log_shape(costs, s_shape, scale=1.0) -> np.ndarray:
    """``log S(J)`` for the strictly decreasing positive shape function S."""
    costs = np.asarray(costs, dtype=float)
    if s_shape == "exp_neg":
        with np.errstate(over="ignore"):
            return -costs / scale
    if s_shape == "reciprocal":
        return -np.log(np.maximum(costs, np.finfo(float).tiny))
    raise ValueError(f"unknown s_shape {s_shape!r}")


def em_update(elites: EliteSet, theta_k: GaussianParams, k, s_shape="exp_neg", scale=1.0) -> GaussianParams:
    """Importance-weighted mean and covariance of the elite samples.

    Each elite gets weight ``S(J)^k / p(w; theta_k)``, computed in the log
    domain and shifted so the largest log-weight is zero.
    """
    if len(elites) == 0:
        raise ValueError("no elite samples")
    w = np.asarray(elites.weights, dtype=float)
    logw = k * log_shape(elites.costs, s_shape, scale) - log_density(theta_k, w)
    logw = np.atleast_1d(logw)
    if not np.any(np.isfinite(logw)):
        log.warning("elite weights underflowed; falling back to uniform weights")
        omega = np.ones(len(elites))
    else:
        logw = np.where(np.isfinite(logw), logw, -np.inf)
        omega = np.exp(logw - np.max(logw))
        if not np.isfinite(omega.sum()) or omega.sum() <= 0:
            log.warning("elite weights underflowed; falling back to uniform weights")
            omega = np.ones(len(elites))
    omega = omega / omega.sum()
    mu = omega @ w
    diff = w - mu
    sigma = (diff * omega[:, None]).T @ diff
    return GaussianParams(mu, 0.5 * (sigma + sigma.T))


def smooth(theta_k: GaussianParams, theta_star: GaussianParams, lam) -> GaussianParams:
    """Convex blend ``lam * theta_k + (1 - lam) * theta_star``."""
    if theta_k.dim != theta_star.dim:
        raise ValueError("dimension mismatch")
    mu = lam * theta_k.mu + (1 - lam) * theta_star.mu
    sigma = lam * theta_k.sigma + (1 - lam) * theta_star.sigma
    return GaussianParams(mu, 0.5 * (sigma + sigma.T))


def run(problem, config: SaopConfig, robust=None, callback: Optional[Callable] = None) -> SaopResult:
    """Run the adaptive search on ``problem`` until the covariance collapses.

    ``problem`` must expose ``dim``, ``weight_support`` and a batched
    ``evaluate(W) -> costs``. With ``robust`` (a contraction spec) it must also
    provide ``evaluate_robust(W, spec) -> (costs, passed)``; samples failing
    the tube check are excluded from the quantile and from the elites.
    ``stall_update`` refits the distribution to the elites of the unchanged
    threshold on a stalled iteration instead of freezing it.
    ``callback(state, record)`` is invoked after every iteration.
    """
    t_start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    dim = problem.dim
    mu0 = getattr(problem, "mu0", None)
    theta = GaussianParams.isotropic(dim, config.sigma0, None if mu0 is None else np.asarray(mu0, dtype=float))
    state = SaopState(k=1, theta=theta, gamma=None, rho_current=config.rho, n_k=config.n_initial)
    scale = None
    total = 0
    best_w, best_j = theta.mu.copy(), math.inf
    status = "budget_iterations"

    while state.k <= config.max_iterations:
        if total + state.n_k > config.max_samples:
            status = "budget_samples"
            break
        try:
            ws = sample(state.theta, state.n_k, problem.weight_support, rng)
        except DegenerateDistribution:
            status = "degenerate"
            break
        if robust is None:
            costs = np.asarray(problem.evaluate(ws), dtype=float)
            admissible = np.ones(costs.shape, dtype=bool)
        else:
            costs, admissible = problem.evaluate_robust(ws, robust)
            costs = np.asarray(costs, dtype=float)
        total += state.n_k
        if admissible.any():
            i_best = int(np.flatnonzero(admissible)[np.argmin(costs[admissible])])
            if costs[i_best] < best_j:
                best_w, best_j = ws[i_best].copy(), float(costs[i_best])
        if scale is None:
            scale = float(np.median(costs))
            if not scale > 0 or not np.isfinite(scale):
                scale = 1.0

        n_elite = rejected = 0
        if admissible.any():
            ranked = costs[admissible]
            kappa = quantile_cost(ranked, state.rho_current)
            decision = threshold_update(kappa, state, ranked, config.epsilon, config.alpha)
        else:
            kappa = math.inf
            decision = ThresholdDecision(False, state.gamma, state.rho_current, math.ceil((1 + config.alpha) * state.n_k), "no_admissible")
        refit = decision.update or (config.stall_update and state.gamma is not None and admissible.any())
        if refit:
            state.gamma = decision.gamma
            state.rho_current = decision.rho
            below = costs <= state.gamma
            rejected = int((below & ~admissible).sum())
            mask = below & admissible
            elites = EliteSet(ws[mask], costs[mask], rejected)
            n_elite = len(elites)
            if n_elite:
                try:
                    theta_star = em_update(elites, state.theta, state.k, config.s_shape, scale)
                except DegenerateDistribution:
                    status = "degenerate"
                    _record(state, decision, costs, kappa, n_elite, rejected)
                    break
                state.theta = smooth(state.theta, theta_star, config.lam)
        n_next = decision.n_next
        record = _record(state, decision, costs, kappa, n_elite, rejected)
        if callback is not None:
            callback(state, record)
        state.n_k = n_next
        state.k += 1
        if record.sigma_norm < config.sigma_stop:
            status = "converged"
            break

    iterations = len(state.history)
    w_star = state.theta.mu.copy()
    j_star = float(np.asarray(problem.evaluate(w_star[None, :]))[0])
    converged = status in ("converged", "degenerate")
    return SaopResult(
        w_star=w_star,
        j_star=j_star,
        best_w=best_w,
        best_j=best_j,
        theta=state.theta,
        iterations=iterations,
        total_samples=total,
        converged=converged,
        status=status,
        history=state.history,
        seed=config.seed,
        wall_time=time.perf_counter() - t_start,
    )


def _record(state, decision, costs, kappa, n_elite, rejected):
    rec = IterationRecord(
        k=state.k,
        n_k=state.n_k,
        kappa=float(kappa),
        gamma=math.nan if state.gamma is None else float(state.gamma),
        rho=float(state.rho_current),
        branch=decision.branch,
        best_j=float(np.min(costs)),
        mean_j=float(np.mean(costs)),
        sigma_norm=state.theta.spectral_norm(),
        elites=n_elite,
        rejected_robust=rejected,
        mu=state.theta.mu.copy(),
    )
    state.history.append(rec)
    return rec


def config_dict(config: SaopConfig) -> dict:
    return asdict(config)
