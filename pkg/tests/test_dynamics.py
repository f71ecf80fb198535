import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saop.dynamics import (
    PENALTY_DIVERGED,
    CostFunctional,
    IntegrationDiverged,
    SystemModel,
    Trajectory,
    piecewise_disturbance,
    rk4_step,
    rollout_batch,
    simulate,
)


def decay(rate=-1.0):
    return SystemModel(1, 1, lambda x, u: rate * x, [-np.inf], [np.inf])


def zero_field(n=2):
    return SystemModel(n, 1, lambda x, u: np.zeros_like(x), [-1.0], [1.0])


def integrator():
    return SystemModel(1, 1, lambda x, u: u, [-1.0], [1.0])


def no_input(x):
    return np.zeros(np.shape(x)[:-1] + (1,))


def test_rk4_zero_field_leaves_state():
    x = np.array([0.3, -2.0])
    assert np.array_equal(rk4_step(zero_field(), no_input, x, 0.1), x)


def test_rk4_one_step_of_exponential_decay():
    # fourth-order Taylor polynomial of exp(-0.01)
    h = 0.01
    expected = 1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24
    x1 = rk4_step(decay(), no_input, np.array([1.0]), h)
    assert x1[0] == pytest.approx(0.990049834, abs=1e-9)
    assert x1[0] == pytest.approx(expected, abs=1e-15)


def test_rk4_constant_field_integrates_linearly():
    x1 = rk4_step(integrator(), lambda x: np.clip(np.ones_like(x), -1, 1), np.array([0.0]), 0.5)
    assert x1[0] == pytest.approx(0.5, abs=1e-15)


def test_rk4_raises_on_divergence():
    blowup = SystemModel(1, 1, lambda x, u: np.full_like(x, np.inf), [-1.0], [1.0])
    with pytest.raises(IntegrationDiverged) as info:
        rk4_step(blowup, no_input, np.array([0.0]), 1.0, t=2.0)
    assert info.value.time == pytest.approx(3.0)


def test_rk4_accuracy_at_one_second():
    x = np.array([1.0])
    for _ in range(100):
        x = rk4_step(decay(), no_input, x, 0.01)
    assert abs(x[0] - math.exp(-1)) <= 1e-8


def test_rk4_fourth_order_convergence():
    def error(dt):
        x = np.array([1.0])
        for _ in range(int(round(1.0 / dt))):
            x = rk4_step(decay(), no_input, x, dt)
        return abs(x[0] - math.exp(-1))

    dts = [0.2, 0.1, 0.05, 0.025]
    errs = [error(h) for h in dts]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    assert all(3.8 < p < 4.2 for p in orders), orders


def test_simulate_terminal_cost_only():
    cost = CostFunctional(lambda x, u: np.zeros(np.shape(x)[:-1]), lambda x, u: np.sum(x * x, axis=-1), 1.0)
    _, j = simulate(zero_field(), no_input, np.array([1.0, 0.0]), cost, 0.1)
    assert j == pytest.approx(1.0, abs=1e-15)


def test_simulate_decay_terminal_cost_matches_closed_form():
    cost = CostFunctional(lambda x, u: np.zeros(np.shape(x)[:-1]), lambda x, u: np.sum(x * x, axis=-1), 1.0)
    _, j = simulate(decay(), no_input, np.array([1.0]), cost, 0.001)
    assert j == pytest.approx(math.exp(-2), abs=1e-6)


def test_simulate_constant_running_cost():
    cost = CostFunctional(lambda x, u: np.ones(np.shape(x)[:-1]), lambda x, u: np.zeros(np.shape(x)[:-1]), 2.0)
    traj, j = simulate(zero_field(1), no_input, np.array([0.0]), cost, 0.1)
    assert abs(j - 2.0) <= 0.1
    assert traj.states.shape == (21, 1)
    assert traj.inputs.shape == (20, 1)


def test_simulate_is_deterministic_with_disturbance():
    cost = CostFunctional(lambda x, u: np.sum(x * x, axis=-1), lambda x, u: np.sum(x * x, axis=-1), 1.0)
    d = piecewise_disturbance(0.3, 1, 1.0, np.random.default_rng(5))
    _, j1 = simulate(decay(), no_input, np.array([1.0]), cost, 0.01, d)
    _, j2 = simulate(decay(), no_input, np.array([1.0]), cost, 0.01, d)
    assert j1 == j2


def test_divergent_rollout_is_penalized_not_raised():
    cost = CostFunctional(lambda x, u: np.sum(x * x, axis=-1), lambda x, u: np.zeros(np.shape(x)[:-1]), 10.0)
    explode = SystemModel(1, 1, lambda x, u: x**3, [-1.0], [1.0])
    traj, j = simulate(explode, no_input, np.array([10.0]), cost, 0.1)
    assert j == PENALTY_DIVERGED
    assert traj.diverged_at is not None


def test_early_stop_truncates_and_charges_terminal_at_stop():
    cost = CostFunctional(
        lambda x, u: np.ones(np.shape(x)[:-1]),
        lambda x, u: 100.0 * np.abs(x[..., 0] - 1.0),
        5.0,
        early_stop=lambda x: x[..., 0] >= 1.0,
    )
    up = SystemModel(1, 1, lambda x, u: np.ones_like(x), [-1.0], [1.0])
    traj, j = simulate(up, no_input, np.array([0.0]), cost, 0.25)
    assert traj.truncated_at == 4
    assert traj.times[-1] == pytest.approx(1.0)
    assert j == pytest.approx(1.0, abs=1e-12)


def test_hold_after_stop_adds_parked_running_cost():
    cost = CostFunctional(
        lambda x, u: np.abs(x[..., 0]) + np.abs(u[..., 0]),
        lambda x, u: np.zeros(np.shape(x)[:-1]),
        2.0,
        early_stop=lambda x: x[..., 0] >= 1.0,
        hold_after_stop=True,
    )
    up = SystemModel(1, 1, lambda x, u: np.ones_like(x), [-1.0], [1.0])
    _, j = simulate(up, no_input, np.array([0.0]), cost, 0.25)
    # accrued: 0.25 * (0 + 0.25 + 0.5 + 0.75); parked at x=1 for the last second
    assert j == pytest.approx(0.375 + 1.0, abs=1e-12)


def test_constraint_violation_adds_penalty_once():
    cost = CostFunctional(
        lambda x, u: np.zeros(np.shape(x)[:-1]),
        lambda x, u: np.zeros(np.shape(x)[:-1]),
        1.0,
        constraint=lambda x: x[..., 0] > 0.5,
        constraint_penalty=7.0,
    )
    up = SystemModel(1, 1, lambda x, u: np.ones_like(x), [-1.0], [1.0])
    _, j = simulate(up, no_input, np.array([0.0]), cost, 0.1)
    assert j == 7.0


def test_batch_matches_single_rollouts():
    model = SystemModel(1, 1, lambda x, u: -x + u, [-0.5], [0.5])
    gains = np.array([-2.0, 0.0, 3.0])
    cost = CostFunctional(lambda x, u: np.sum(x * x + u * u, axis=-1), lambda x, u: np.sum(x * x, axis=-1), 1.0)
    x0 = np.array([[1.0], [2.0], [-1.0]])
    out = rollout_batch(model, lambda x: np.clip(gains[:, None] * x, -0.5, 0.5), x0, cost, 0.01)
    for g, x, jb in zip(gains, x0, out.costs):
        _, j = simulate(model, lambda s, g=g: np.clip(g * s, -0.5, 0.5), x, cost, 0.01)
        assert jb == j


def test_trajectory_csv_round_trip(tmp_path):
    cost = CostFunctional(lambda x, u: np.sum(x * x, axis=-1), lambda x, u: np.sum(x * x, axis=-1), 0.3)
    model = SystemModel(2, 1, lambda x, u: -x + np.concatenate([u, u], axis=-1), [-1.0], [1.0])
    traj, _ = simulate(model, lambda x: np.clip(x[..., :1] * 0.7, -1, 1), np.array([0.1, 1 / 3]), cost, 0.1)
    traj.to_csv(tmp_path / "t.csv")
    back = Trajectory.from_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,x1,x2,u1"
    assert np.array_equal(back.states, traj.states)
    assert np.array_equal(back.inputs, traj.inputs)
    assert np.array_equal(back.times, traj.times)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.0), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_disturbance_respects_bound(bound, dim, seed):
    d = piecewise_disturbance(bound, dim, 3.0, np.random.default_rng(seed), on_sphere=seed % 2 == 0)
    for t in np.linspace(0.0, 3.0, 31):
        assert np.linalg.norm(d(t)) <= bound


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_saturation_holds_at_every_step(gain, x0):
    model = SystemModel(1, 1, lambda x, u: u - 0.1 * x, [-2.0], [3.0])
    cost = CostFunctional(lambda x, u: np.sum(u * u, axis=-1), lambda x, u: np.zeros(np.shape(x)[:-1]), 1.0)
    traj, _ = simulate(model, lambda x: model.saturate(gain * x), np.array([x0]), cost, 0.1)
    assert np.all(traj.inputs >= -2.0) and np.all(traj.inputs <= 3.0)
