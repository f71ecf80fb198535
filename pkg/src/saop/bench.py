"""Benchmark planning problems: LTI with non-quadratic cost, Dubins car, static oracle."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .basis import BasisSet, make_affine, make_batch_policy, make_policy, make_polynomial, make_rbf
from .contraction import ContractionSpec, verify_batch, verify_tube
from .dynamics import BatchRollout, CostFunctional, SystemModel, rollout_batch, simulate
from .gaussian import Box

LTI_A = np.array([[-1.0, 1.0], [0.0, 0.0]])
LTI_B = np.array([[0.0], [1.0]])
LTI_X0 = np.array([5.0, 5.0])
CUBIC_TERMS = [(0,), (1,), (0, 0), (1, 1), (0, 0, 0), (1, 1, 1)]
LINEAR_TERMS = [(0,), (1,)]

# weights reported for the LTI example, basis order [x1, x2, x1^2, x2^2, x1^3, x2^3]
LTI_REPORTED_WEIGHTS = np.array([-1.0629, -2.7517, 0.0, -1.7939, -0.0987, -2.1474])

DUBINS_GOAL = np.array([20.0, 20.0])
DUBINS_OBSTACLE = (8.0, 14.0, 8.0, 14.0)


@dataclass
class PlanningProblem:
    """A closed-loop planning problem over policy weights.

    With ``static_objective`` set, ``evaluate`` scores weight vectors directly
    and every simulation field may be ``None``.
    """

    weight_support: Box
    model: Optional[SystemModel] = None
    cost: Optional[CostFunctional] = None
    basis: Optional[BasisSet] = None
    x0: Optional[np.ndarray] = None
    dt: float = 0.01
    contraction: Optional[ContractionSpec] = None
    disturbance_bound: Optional[float] = None
    static_objective: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.static_objective is None:
            if any(v is None for v in (self.model, self.cost, self.basis, self.x0)):
                raise ValueError("model, cost, basis and x0 are required without a static objective")
            self.x0 = np.asarray(self.x0, dtype=float)
            if self.x0.shape != (self.model.state_dim,):
                raise ValueError("x0 does not match the state dimension")
            expected = self.model.input_dim * len(self.basis)
            if self.weight_support.dim != expected:
                raise ValueError(f"weight support has dim {self.weight_support.dim}, expected {expected}")

    @property
    def dim(self) -> int:
        return self.weight_support.dim

    def evaluate(self, ws) -> np.ndarray:
        """Cost ``J(x0; w)`` for every row of ``ws``."""
        ws = np.atleast_2d(np.asarray(ws, dtype=float))
        if ws.shape[1] != self.dim:
            raise ValueError(f"weights have dim {ws.shape[1]}, expected {self.dim}")
        if self.static_objective is not None:
            return np.asarray(self.static_objective(ws), dtype=float)
        return self.rollout(ws).costs

    def rollout(self, ws, keep_states=False) -> BatchRollout:
        """Batched closed-loop rollouts with per-row goal and constraint flags."""
        if self.static_objective is not None:
            raise ValueError("static problems have no rollouts")
        ws = np.atleast_2d(np.asarray(ws, dtype=float))
        policy = make_batch_policy(ws, self.basis, self.model.input_lower, self.model.input_upper)
        x0 = np.broadcast_to(self.x0, (ws.shape[0], self.x0.shape[0]))
        return rollout_batch(self.model, policy, x0, self.cost, self.dt, keep_states=keep_states)

    def evaluate_robust(self, ws, spec: Optional[ContractionSpec] = None):
        """Costs plus the tube-check verdict for every row of ``ws``."""
        spec = spec or self.contraction
        if spec is None or self.static_objective is not None:
            raise ValueError("robust evaluation needs a simulated problem and a contraction spec")
        ws = np.atleast_2d(np.asarray(ws, dtype=float))
        out = self.rollout(ws, keep_states=True)
        passed, _ = verify_batch(self.model, self.basis, ws, out.states, spec)
        return out.costs, passed & ~out.diverged

    def policy(self, w):
        return make_policy(w, self.basis, self.model.input_lower, self.model.input_upper)

    def trajectory(self, w, disturbance=None, cost=None):
        """Closed-loop rollout ``(Trajectory, J)`` under weights ``w``."""
        if self.static_objective is not None:
            raise ValueError("static problems have no trajectory")
        return simulate(self.model, self.policy(w), self.x0, cost or self.cost, self.dt, disturbance)

    def verify(self, w, spec: Optional[ContractionSpec] = None):
        spec = spec or self.contraction
        if spec is None:
            raise ValueError("no contraction spec")
        nominal, _ = self.trajectory(w)
        return verify_tube(self.model, self.basis, w, nominal, spec)

    def reaches_goal(self, w) -> bool:
        traj, _ = self.trajectory(w)
        test = self.cost.early_stop
        return bool(test is not None and np.any(test(traj.states)))

    def collides(self, w) -> bool:
        traj, _ = self.trajectory(w)
        test = self.cost.constraint
        return bool(test is not None and np.any(test(traj.states)))


def lti_model() -> SystemModel:
    def f(x, u):
        return x @ LTI_A.T + u @ LTI_B.T

    def jac(x, u):
        shape = np.shape(x)[:-1]
        return np.broadcast_to(LTI_A, shape + (2, 2)), np.broadcast_to(LTI_B, shape + (2, 1))

    return SystemModel(2, 1, f, [-np.inf], [np.inf], jacobian=jac)


def lti_running_cost(x, u):
    r = np.sum(x * x, axis=-1)
    return r + np.sum(u * u, axis=-1) + 0.5 * r**2 + 0.8 * r**3


def lti_running_cost_elementwise(x, u):
    """Variant with the higher powers taken per coordinate: ``sum_i x_i^4`` and ``sum_i x_i^6``."""
    x2 = x * x
    return np.sum(x2 + 0.5 * x2**2 + 0.8 * x2**3, axis=-1) + np.sum(u * u, axis=-1)


def lti_terminal_cost(x, u):
    return np.sum(x * x, axis=-1)


def lti_nonquadratic(
    horizon=10.0,
    dt=0.01,
    basis="cubic",
    weight_bound=10.0,
    beta=2.0,
    ell=1.0,
    rho_max=0.5,
    cost_form="norm",
):
    """Double-integrator-like LTI plant with a sixth-order state penalty.

    ``cost_form="norm"`` penalizes powers of ``||x||``; ``"elementwise"``
    uses per-coordinate powers instead.
    """
    terms = {"cubic": CUBIC_TERMS, "linear": LINEAR_TERMS}
    if basis not in terms:
        raise ValueError(f"basis must be one of {sorted(terms)}")
    forms = {"norm": lti_running_cost, "elementwise": lti_running_cost_elementwise}
    if cost_form not in forms:
        raise ValueError(f"cost_form must be one of {sorted(forms)}")
    phi = make_polynomial(terms[basis], 2)
    cost = CostFunctional(forms[cost_form], lti_terminal_cost, float(horizon))
    spec = ContractionSpec(np.eye(2), beta=beta, ell=ell, rho_max=rho_max)
    return PlanningProblem(
        weight_support=Box.uniform(-weight_bound, weight_bound, len(phi)),
        model=lti_model(),
        cost=cost,
        basis=phi,
        x0=LTI_X0.copy(),
        dt=float(dt),
        contraction=spec,
        disturbance_bound=rho_max,
        name="lti_nonquadratic",
        info={"A": LTI_A.tolist(), "B": LTI_B.tolist(), "basis": basis, "cost_form": cost_form},
    )


def dubins_model(speed_bound=10.0, turn_bound=5.0) -> SystemModel:
    def f(x, u):
        th = x[..., 2]
        return np.stack([u[..., 0] * np.cos(th), u[..., 0] * np.sin(th), u[..., 1]], axis=-1)

    def jac(x, u):
        th, v = x[..., 2], u[..., 0]
        fx = np.zeros(np.shape(x)[:-1] + (3, 3))
        fx[..., 0, 2] = -v * np.sin(th)
        fx[..., 1, 2] = v * np.cos(th)
        fu = np.zeros(np.shape(x)[:-1] + (3, 2))
        fu[..., 0, 0] = np.cos(th)
        fu[..., 1, 0] = np.sin(th)
        fu[..., 2, 1] = 1.0
        return fx, fu

    return SystemModel(3, 2, f, [-speed_bound, -turn_bound], [speed_bound, turn_bound], jacobian=jac)


def perimeter_points(rect, count) -> np.ndarray:
    """``count`` points evenly spaced along a rectangle boundary from its lower-left corner."""
    x0, x1, y0, y1 = rect
    w, h = x1 - x0, y1 - y0
    out = []
    for s in np.arange(count) * (2 * (w + h) / count):
        if s < w:
            out.append((x0 + s, y0))
        elif s < w + h:
            out.append((x1, y0 + s - w))
        elif s < 2 * w + h:
            out.append((x1 - (s - w - h), y1))
        else:
            out.append((x0, y1 - (s - 2 * w - h)))
    return np.array(out)


def dubins_car(
    horizon=100.0,
    dt=0.05,
    goal=(20.0, 20.0),
    goal_tolerance=0.5,
    grid_step=5.0,
    grid_range=(-5.0, 30.0),
    sigma=None,
    obstacle=DUBINS_OBSTACLE,
    obstacle_centers=13,
    collision_penalty=1e6,
    hold_after_stop=True,
    weight_bound=10.0,
):
    """Dubins car reaching ``goal`` around one rectangular obstacle.

    Basis: RBFs on an x-y grid plus centers on the obstacle boundary, then
    the affine terms ``x - x_f``, ``y - y_f`` and ``theta``; each of the two
    input channels has its own weights.
    """
    goal = np.asarray(goal, dtype=float)
    sigma = grid_step if sigma is None else sigma
    ticks = np.arange(grid_range[0], grid_range[1] + 1e-9, grid_step)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    centers = grid
    if obstacle is not None and obstacle_centers:
        centers = np.vstack([grid, perimeter_points(obstacle, obstacle_centers)])
    phi = make_rbf(centers, sigma, dims=(0, 1)) + make_affine(
        np.eye(3), [goal[0], goal[1], 0.0], names=["linear x-x_f", "linear y-y_f", "linear theta"]
    )

    def running(x, u):
        return 0.1 * (np.linalg.norm(x, axis=-1) + np.linalg.norm(u, axis=-1))

    def terminal(x, u):
        return 1000.0 * np.linalg.norm(x[..., :2] - goal, axis=-1)

    def at_goal(x):
        return np.linalg.norm(x[..., :2] - goal, axis=-1) <= goal_tolerance

    constraint = None
    if obstacle is not None:
        ox0, ox1, oy0, oy1 = obstacle

        def constraint(x):
            return (x[..., 0] >= ox0) & (x[..., 0] <= ox1) & (x[..., 1] >= oy0) & (x[..., 1] <= oy1)

    cost = CostFunctional(
        running,
        terminal,
        float(horizon),
        early_stop=at_goal,
        hold_after_stop=hold_after_stop,
        constraint=constraint,
        constraint_penalty=float(collision_penalty),
    )
    model = dubins_model()
    return PlanningProblem(
        weight_support=Box.uniform(-weight_bound, weight_bound, model.input_dim * len(phi)),
        model=model,
        cost=cost,
        basis=phi,
        x0=np.zeros(3),
        dt=float(dt),
        name="dubins_car",
        info={
            "goal": goal.tolist(),
            "goal_tolerance": goal_tolerance,
            "obstacle": None if obstacle is None else list(obstacle),
            "grid_centers": int(grid.shape[0]),
            "sigma": sigma,
        },
    )


def static_quadratic(w_star=(0.3, -0.2, 0.5, -0.4, 0.1, 0.25), weight_bound=10.0):
    """Oracle problem ``J(w) = ||w - w_star||^2`` with no simulation."""
    target = np.atleast_1d(np.asarray(w_star, dtype=float))
    if target.size < 1:
        raise ValueError("w_star must be nonempty")

    def objective(ws):
        d = np.atleast_2d(ws) - target
        return np.sum(d * d, axis=-1)

    return PlanningProblem(
        weight_support=Box.uniform(-weight_bound, weight_bound, target.size),
        static_objective=objective,
        name="static_quadratic",
        info={"w_star": target.tolist()},
    )


PROBLEMS = {
    "lti_nonquadratic": lti_nonquadratic,
    "dubins_car": dubins_car,
    "static_quadratic": static_quadratic,
}


def with_basis(problem: PlanningProblem, basis: BasisSet) -> PlanningProblem:
    """Same problem with a different basis (and a matching weight box)."""
    lo = problem.weight_support.lower.min()
    hi = problem.weight_support.upper.max()
    dim = problem.model.input_dim * len(basis)
    return replace(problem, basis=basis, weight_support=Box.uniform(lo, hi, dim))
