"""Closed-loop simulation and finite-horizon cost evaluation.

Vector fields, costs and policies follow a broadcasting convention: a state
argument has shape ``(..., n)`` and an input argument ``(..., m)``. A single
trajectory is the special case with no leading axes, and a batch of
independent closed loops (one policy per row) uses a leading axis of size B.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

PENALTY_DIVERGED = 1e12

Policy = Callable[[np.ndarray], np.ndarray]


class IntegrationDiverged(FloatingPointError):
    """A state component became non-finite during integration."""

    def __init__(self, time: float):
        super().__init__(f"integration diverged at t={time:.6g}")
        self.time = time


@dataclass(frozen=True)
class SystemModel:
    """Input-affine or general vector field ``xdot = f(x, u)`` with an input box.

    ``jacobian``, when supplied, maps ``(x, u)`` to the pair of partials
    ``(df/dx, df/du)`` with shapes ``(..., n, n)`` and ``(..., n, m)``.
    """

    state_dim: int
    input_dim: int
    vector_field: Callable[[np.ndarray, np.ndarray], np.ndarray]
    input_lower: np.ndarray
    input_upper: np.ndarray
    jacobian: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None

    def __post_init__(self):
        lo = np.broadcast_to(np.asarray(self.input_lower, dtype=float), (self.input_dim,)).copy()
        hi = np.broadcast_to(np.asarray(self.input_upper, dtype=float), (self.input_dim,)).copy()
        if self.state_dim < 1 or self.input_dim < 1:
            raise ValueError("state_dim and input_dim must be positive")
        if np.any(lo > hi):
            raise ValueError("input_lower must not exceed input_upper")
        object.__setattr__(self, "input_lower", lo)
        object.__setattr__(self, "input_upper", hi)

    def __call__(self, x, u):
        return self.vector_field(x, u)

    def saturate(self, u):
        return np.clip(u, self.input_lower, self.input_upper)


@dataclass(frozen=True)
class CostFunctional:
    """Running cost, terminal cost and horizon of the planning objective.

    Parameters
    ----------
    running, terminal : callable
        ``(x, u) -> (...)`` nonnegative costs.
    horizon : float
        Final time T.
    early_stop : callable, optional
        Goal test ``x -> bool[...]``. When it fires the rollout halts and the
        terminal cost is charged at the stopping state.
    hold_after_stop : bool
        If True, a stopped rollout keeps accruing ``running(x_stop, 0)`` for
        the remainder of the horizon, i.e. the system parks at the goal.
    constraint : callable, optional
        Violation test ``x -> bool[...]`` checked at every grid point; a
        trajectory that violates it at least once pays ``constraint_penalty``.
    """

    running: Callable[[np.ndarray, np.ndarray], np.ndarray]
    terminal: Callable[[np.ndarray, np.ndarray], np.ndarray]
    horizon: float
    early_stop: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hold_after_stop: bool = False
    constraint: Optional[Callable[[np.ndarray], np.ndarray]] = None
    constraint_penalty: float = 0.0

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    terminal_input: np.ndarray
    truncated_at: Optional[int] = None
    diverged_at: Optional[float] = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def to_csv(self, path) -> None:
        """Write ``t,x1..xn,u1..um`` rows; floats use round-trip ``repr``."""
        n = self.states.shape[1]
        m = self.terminal_input.shape[-1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
        inputs = np.vstack([self.inputs.reshape(-1, m), self.terminal_input.reshape(1, m)])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t, x, u in zip(self.times, self.states, inputs):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(v)) for v in u])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        n = sum(h.startswith("x") for h in header)
        return cls(
            times=data[:, 0],
            states=data[:, 1 : 1 + n],
            inputs=data[:-1, 1 + n :],
            terminal_input=data[-1, 1 + n :],
        )


@dataclass
class Disturbance:
    """Additive disturbance ``omega(t)`` with a sup-norm bound."""

    bound: float
    realization: Callable[[float], np.ndarray] = field(repr=False)

    def __call__(self, t: float) -> np.ndarray:
        w = np.asarray(self.realization(t), dtype=float)
        norm = np.linalg.norm(w, axis=-1)
        if np.any(norm > self.bound * (1 + 1e-12) + 1e-300):
            raise AssertionError(f"disturbance norm {np.max(norm):.6g} exceeds bound {self.bound:.6g}")
        return w


def piecewise_disturbance(bound, state_dim, horizon, rng, segment=0.1, on_sphere=True):
    """Random piecewise-constant disturbance, redrawn every ``segment`` seconds.

    Directions are uniform on the sphere; magnitudes equal ``bound`` when
    ``on_sphere`` else uniform in the ball.
    """
    count = int(np.ceil(horizon / segment)) + 2
    g = rng.standard_normal((count, state_dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    if on_sphere:
        radii = np.full(count, float(bound))
    else:
        radii = bound * rng.random(count) ** (1.0 / state_dim)
    # shave a few ulps so the norm check never trips on rounding
    values = g * (radii * (1 - 1e-12))[:, None]

    def realization(t):
        idx = min(max(int(np.floor(t / segment + 1e-9)), 0), count - 1)
        return values[idx]

    return Disturbance(float(bound), realization)


def rk4_step(model, policy, x, dt, disturbance=None, t=0.0):
    """One classical Runge-Kutta step of ``xdot = f(x, policy(x)) + omega(t)``.

    Raises
    ------
    IntegrationDiverged
        If any component of the new state is not finite.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    x_next = _rk4(model, policy, x, dt, disturbance, t)
    if not np.all(np.isfinite(x_next)):
        raise IntegrationDiverged(t + dt)
    return x_next


def _rk4(model, policy, x, dt, disturbance, t):
    def rhs(s, tau):
        d = model.vector_field(s, policy(s))
        if disturbance is not None:
            d = d + disturbance(tau)
        return d

    h2 = 0.5 * dt
    k1 = rhs(x, t)
    k2 = rhs(x + h2 * k1, t + h2)
    k3 = rhs(x + h2 * k2, t + h2)
    k4 = rhs(x + dt * k3, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def num_steps(horizon, dt):
    steps = int(round(horizon / dt))
    if steps < 1 or abs(steps * dt - horizon) > dt:
        raise ValueError(f"dt={dt} incompatible with horizon={horizon}")
    return steps


@dataclass
class BatchRollout:
    costs: np.ndarray
    stop_index: np.ndarray
    diverged: np.ndarray
    violated: np.ndarray
    reached: np.ndarray
    states: Optional[np.ndarray] = None
    inputs: Optional[np.ndarray] = None
    final_inputs: Optional[np.ndarray] = None


def rollout_batch(model, policy, x0, cost, dt, disturbance=None, keep_states=False):
    """Simulate B closed loops in lockstep and return their costs.

    ``policy`` maps a ``(B, n)`` state array to ``(B, m)`` inputs, row ``i``
    being the i-th closed loop. Rows that diverge are frozen and charged
    ``PENALTY_DIVERGED``; rows whose goal test fires are frozen as well.
    """
    x = np.array(x0, dtype=float)
    if x.ndim != 2:
        raise ValueError("x0 must have shape (B, n)")
    batch, n = x.shape
    steps = num_steps(cost.horizon, dt)
    active = np.ones(batch, dtype=bool)
    diverged = np.zeros(batch, dtype=bool)
    reached = np.zeros(batch, dtype=bool)
    violated = np.zeros(batch, dtype=bool)
    stop_index = np.full(batch, steps)
    total = np.zeros(batch)
    states = inputs = None
    if keep_states:
        states = np.empty((batch, steps + 1, n))
        states[:, 0] = x
        inputs = np.empty((batch, steps, model.input_dim))

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps + 1):
            t = k * dt
            if cost.constraint is not None:
                violated |= active & np.asarray(cost.constraint(x), dtype=bool)
            if cost.early_stop is not None:
                hit = active & np.asarray(cost.early_stop(x), dtype=bool)
                if hit.any():
                    reached |= hit
                    stop_index[hit] = k
                    active &= ~hit
            if k == steps or not active.any():
                break
            u = policy(x)
            total += np.where(active, cost.running(x, u) * dt, 0.0)
            if keep_states:
                inputs[:, k] = u
            x_new = _rk4(model, policy, x, dt, disturbance, t)
            bad = active & ~np.all(np.isfinite(x_new), axis=1)
            if bad.any():
                diverged |= bad
                stop_index[bad] = k
                active &= ~bad
            x = np.where(active[:, None], x_new, x)
            if keep_states:
                states[:, k + 1] = x

        u_end = policy(x)
        total += cost.terminal(x, u_end)
        if cost.hold_after_stop and cost.early_stop is not None:
            rest = (steps - stop_index) * dt
            total += np.where(reached, cost.running(x, np.zeros_like(u_end)) * rest, 0.0)
        if cost.constraint is not None and cost.constraint_penalty:
            total += np.where(violated, cost.constraint_penalty, 0.0)
    total = np.where(diverged | ~np.isfinite(total), PENALTY_DIVERGED, total)
    return BatchRollout(total, stop_index, diverged, violated, reached, states, inputs, u_end)


def simulate(model, policy, x0, cost, dt, disturbance=None):
    """Roll out one closed loop from ``x0`` and evaluate its cost.

    Returns
    -------
    (Trajectory, float)
        The trajectory (cut at the stopping index when the goal test fires or
        the integration diverges) and the cost ``J``. A diverged rollout is
        charged ``PENALTY_DIVERGED``.
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")

    def batch_policy(x):
        return np.asarray(policy(x[0]), dtype=float).reshape(1, -1)

    out = rollout_batch(model, batch_policy, x0[None, :], cost, dt, disturbance, keep_states=True)
    stop = int(out.stop_index[0])
    times = np.arange(stop + 1) * dt
    traj = Trajectory(
        times=times,
        states=out.states[0, : stop + 1].copy(),
        inputs=out.inputs[0, :stop].copy(),
        terminal_input=out.final_inputs[0].copy(),
        truncated_at=stop if (out.reached[0] or out.diverged[0]) else None,
        diverged_at=(stop + 1) * dt if out.diverged[0] else None,
    )
    return traj, float(out.costs[0])
