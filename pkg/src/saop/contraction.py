"""Contraction-based tube verification and disturbance bounds.

A closed loop passes the tube check when, at sampled times along its nominal
trajectory and for every state in the metric ball of radius ``ell``, the
matrix ``G = J^T M + M J`` (``J`` the closed-loop Jacobian) satisfies the
contraction condition. Two forms are available:

``entrywise``
    ``G_ij <= -beta * M_ij`` for every entry.
``matrix``
    ``G <= -2 beta M`` in the Loewner order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .basis import weights_matrix

MODES = ("entrywise", "matrix")


@dataclass(frozen=True)
class ContractionSpec:
    M: np.ndarray
    beta: float
    ell: float
    rho_max: float = 0.0
    ball_samples: int = 64
    check_stride: int = 10
    mode: str = "entrywise"
    tol: float = 1e-9

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.M, dtype=float))
        if m.shape[0] != m.shape[1] or not np.allclose(m, m.T):
            raise ValueError("M must be square and symmetric")
        if np.linalg.eigvalsh(m).min() <= 0:
            raise ValueError("M must be positive definite")
        if not (self.beta > 0 and self.ell > 0):
            raise ValueError("beta and ell must be positive")
        if self.rho_max < 0:
            raise ValueError("rho_max must be nonnegative")
        if self.ball_samples < 0 or self.check_stride < 1:
            raise ValueError("ball_samples >= 0 and check_stride >= 1 required")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        object.__setattr__(self, "M", m.copy())

    def to_dict(self):
        return {
            "M": self.M.tolist(),
            "beta": self.beta,
            "ell": self.ell,
            "rho_max": self.rho_max,
            "ball_samples": self.ball_samples,
            "check_stride": self.check_stride,
            "mode": self.mode,
            "tol": self.tol,
        }


@dataclass
class Violation:
    t: float
    i: Optional[int]
    j: Optional[int]
    margin: float


@dataclass
class VerificationReport:
    passed: bool
    first_violation: Optional[Violation]
    times: np.ndarray = field(repr=False)
    margins: np.ndarray = field(repr=False)

    def __iter__(self):
        yield self.passed
        yield self.first_violation

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.margins)) if self.margins.size else float("inf")

    def to_dict(self):
        fv = None
        if self.first_violation is not None:
            fv = vars(self.first_violation).copy()
        return {
            "passed": self.passed,
            "first_violation": fv,
            "worst_margin": self.worst_margin,
            "checkpoints": [{"t": float(t), "margin": float(m)} for t, m in zip(self.times, self.margins)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def closed_loop_jacobian(model, basis, w, x) -> np.ndarray:
    """``d/dx f(x, u(x))`` at one state ``(n,)`` or many ``(..., n)``.

    Uses the model's analytic partials together with the basis gradient when
    both exist, otherwise central differences with ``h = 1e-5 (1 + |x_i|)``.
    Input channels pinned at a bound contribute no derivative.
    """
    x = np.asarray(x, dtype=float)
    wm = weights_matrix(w, model.input_dim, len(basis))
    return _batch_jacobian(model, basis, wm[None], x[None])[0]


def _batch_jacobian(model, basis, wm, x):
    # wm: (B, m, N) weights; x: (B, ..., n) states, row b closed with wm[b]
    lo, hi = model.input_lower, model.input_upper

    def policy(s):
        return np.clip(np.einsum("bmN,b...N->b...m", wm, basis(s)), lo, hi)

    if model.jacobian is not None and basis.has_gradient:
        raw = np.einsum("bmN,b...N->b...m", wm, basis(x))
        free = (raw > lo) & (raw < hi)
        fx, fu = model.jacobian(x, np.clip(raw, lo, hi))
        du = np.einsum("bmN,b...Nn->b...mn", wm, basis.gradient(x)) * free[..., None]
        return fx + fu @ du
    n = model.state_dim
    jac = np.empty(x.shape + (n,))
    for i in range(n):
        h = 1e-5 * (1.0 + np.abs(x[..., i]))
        step = np.zeros_like(x)
        step[..., i] = h
        xp, xm = x + step, x - step
        fp = model.vector_field(xp, policy(xp))
        fm = model.vector_field(xm, policy(xm))
        jac[..., :, i] = (fp - fm) / (2.0 * h[..., None])
    return jac


def ball_offsets(spec: ContractionSpec) -> np.ndarray:
    """Deterministic points of the metric ball ``{e : e^T M e <= ell^2}``.

    The set holds the center, the ``2n`` principal-axis extremes, and
    ``ball_samples`` Halton points of which half sit on the boundary.
    """
    n = spec.M.shape[0]
    unit = [np.zeros((1, n)), np.eye(n), -np.eye(n)]
    if spec.ball_samples:
        q = qmc.Halton(d=n + 1, scramble=False).random(spec.ball_samples + 1)[1:]
        q = np.clip(q, 1e-12, 1 - 1e-12)
        g = ndtri(q[:, :n])
        dirs = g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
        radii = q[:, n] ** (1.0 / n)
        radii[::2] = 1.0
        unit.append(dirs * radii[:, None])
    unit = np.vstack(unit)
    # M = L L^T; e = ell * L^{-T} v maps the unit ball onto the metric ball
    chol = np.linalg.cholesky(spec.M)
    return spec.ell * np.linalg.solve(chol.T, unit.T).T


def contraction_margin(jac, spec: ContractionSpec):
    """Per-point margins (negative means violated).

    Returns ``(margin, argmax)`` where for entrywise mode ``margin`` is
    ``min_ij(-beta M_ij - G_ij)`` and ``argmax`` the worst ``(i, j)``.
    """
    m = spec.M
    g = np.swapaxes(jac, -1, -2) @ m + m @ jac
    if spec.mode == "entrywise":
        slack = -spec.beta * m - g
        flat = slack.reshape(slack.shape[:-2] + (-1,))
        idx = np.argmin(flat, axis=-1)
        return np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0], idx
    chol = np.linalg.cholesky(m)
    linv = np.linalg.inv(chol)
    scaled = linv @ g @ linv.T
    lam_max = np.linalg.eigvalsh(0.5 * (scaled + np.swapaxes(scaled, -1, -2)))[..., -1]
    return -2.0 * spec.beta - lam_max, None


def verify_tube(model, basis, w, nominal, spec: ContractionSpec) -> VerificationReport:
    """Check the contraction condition in a tube around ``nominal``.

    The maximum over each ball is estimated from the fixed point set of
    :func:`ball_offsets`, so a pass is an under-approximation of the exact
    check at the sampled times.
    """
    states = np.asarray(nominal.states, dtype=float)
    if not np.all(np.isfinite(states)):
        raise ValueError("nominal trajectory must be finite")
    wm = weights_matrix(w, model.input_dim, len(basis))
    margin, arg, idx = _tube_margins(model, basis, wm[None], states[None], spec)
    margin, arg = margin[0], None if arg is None else arg[0]
    worst = margin.min(axis=1)
    times = np.asarray(nominal.times)[idx]
    bad = np.nonzero(worst < -spec.tol)[0]
    first = None
    if bad.size:
        c = int(bad[0])
        p = int(np.argmin(margin[c]))
        i = j = None
        if arg is not None:
            i, j = divmod(int(arg[c, p]), spec.M.shape[0])
        first = Violation(float(times[c]), i, j, float(worst[c]))
    return VerificationReport(bad.size == 0, first, times, worst)


def verify_batch(model, basis, ws, states, spec: ContractionSpec):
    """Tube check for many closed loops at once.

    ``ws`` is ``(B, D)`` and ``states`` the matching nominal trajectories
    ``(B, K + 1, n)``. Returns ``(passed, worst_margin)`` arrays of length B.
    """
    states = np.asarray(states, dtype=float)
    wm = np.asarray(ws, dtype=float).reshape(-1, model.input_dim, len(basis))
    margin, _, _ = _tube_margins(model, basis, wm, states, spec)
    worst = margin.reshape(margin.shape[0], -1).min(axis=1)
    worst = np.where(np.all(np.isfinite(states), axis=(1, 2)), worst, -np.inf)
    return worst >= -spec.tol, worst


def _tube_margins(model, basis, wm, states, spec):
    idx = np.arange(0, states.shape[1], spec.check_stride)
    offsets = ball_offsets(spec)
    pts = states[:, idx, None, :] + offsets
    with np.errstate(over="ignore", invalid="ignore"):
        jac = _batch_jacobian(model, basis, wm, pts)
        margin, arg = contraction_margin(jac, spec)
    margin = np.where(np.isfinite(margin), margin, -np.inf)
    return margin, arg, idx


def ultimate_bound(spec: ContractionSpec) -> float:
    """Asymptotic bound ``2 ell rho_max / beta`` on ``||x - xbar||_M^2``."""
    return 2.0 * spec.ell * spec.rho_max / spec.beta


def bound_envelope(spec: ContractionSpec, t):
    """Transient bound ``(2 ell rho_max / beta)(1 - exp(-beta t))``, t >= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    return ultimate_bound(spec) * -np.expm1(-spec.beta * t)


def metric_deviation(states, nominal_states, M) -> np.ndarray:
    """``||x(t) - xbar(t)||_M^2`` row by row."""
    e = np.asarray(states) - np.asarray(nominal_states)
    return np.einsum("ti,ij,tj->t", e, M, e)
