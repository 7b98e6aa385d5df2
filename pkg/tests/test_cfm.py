import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from capcycle.cfm import (
    ParameterSpace,
    eval_poly,
    initial_state_for,
    make_capability_function,
    poly_basis,
    rollout,
    smoothness_probe,
)
from capcycle.config import SimConfig
from capcycle.errors import DimensionMismatch, ParameterOutOfBounds, PhaseOutOfRange
from capcycle.simkin import initial_state

SIM = SimConfig(dt=0.05, horizon=1.0)


def test_boundary_identities_hold_for_random_coefficients():
    rng = np.random.default_rng(0)
    theta = rng.uniform(-math.pi, math.pi, size=(10_000, 5))
    start = theta @ poly_basis(0.0, 5)
    end = theta @ poly_basis(1.0, 5)
    assert np.max(np.abs(start - theta[:, 0])) <= 1e-12
    assert np.max(np.abs(end - theta[:, 1])) <= 1e-12
    for row in theta[:50]:
        assert eval_poly(row, 0.0) == pytest.approx(row[0], abs=1e-12)
        assert eval_poly(row, 1.0) == pytest.approx(row[1], abs=1e-12)


def test_term_by_term_value():
    assert eval_poly([0.0, math.pi, 1.0, 0.0, 0.0], 0.5) == pytest.approx(math.pi / 2 - 0.25, abs=1e-15)


def test_zero_higher_terms_interpolate_linearly():
    for phi in np.linspace(0.0, 1.0, 11):
        assert eval_poly([0.4, -1.2, 0.0, 0.0], phi) == pytest.approx(0.4 + (-1.2 - 0.4) * phi, abs=1e-15)


def test_appending_zero_terms_changes_nothing():
    rng = np.random.default_rng(1)
    theta = rng.uniform(-1.0, 1.0, size=4)
    padded = np.concatenate([theta, np.zeros(3)])
    for phi in np.linspace(0.0, 1.0, 7):
        assert eval_poly(padded, phi) == pytest.approx(eval_poly(theta, phi), abs=1e-14)


def test_phase_outside_unit_interval():
    with pytest.raises(PhaseOutOfRange):
        eval_poly([0.0, 1.0], 1.5)
    with pytest.raises(PhaseOutOfRange):
        eval_poly([0.0, 1.0], -0.1)


def test_parameter_counts(arm, robots):
    assert ParameterSpace.from_robot(arm).dim == 15
    assert ParameterSpace.from_robot(robots[1]["Cart"], wheel_coefficients=3).dim == 12


def test_zero_parameters_give_a_zero_command(arm):
    space = ParameterSpace.from_robot(arm)
    cap_fn = make_capability_function(space, np.zeros(space.dim), arm, SIM)
    for t in (0.0, 0.35, 1.0):
        assert_allclose(cap_fn(initial_state(arm).robot, t).kinematic.command, 0.0)


def test_space_must_match_the_robot(arm, robots):
    cart_space = ParameterSpace.from_robot(robots[1]["Cart"])
    with pytest.raises(DimensionMismatch):
        make_capability_function(cart_space, np.zeros(cart_space.dim), arm, SIM)
    space = ParameterSpace.from_robot(arm)
    with pytest.raises(ParameterOutOfBounds):
        make_capability_function(space, np.full(space.dim, 4.0), arm, SIM)


def test_rollout_starts_and_ends_on_the_polynomial(arm):
    space = ParameterSpace.from_robot(arm)
    theta = np.zeros(space.dim)
    theta[space.offsets] = [0.1, -0.2, 0.3]
    theta[np.array(space.offsets) + 1] = [0.4, 0.1, 0.0]
    cap = rollout(space, theta, arm, SIM)
    assert cap.feasible
    assert_allclose(cap.q[0], [0.1, -0.2, 0.3])
    assert_allclose(cap.q[-1], [0.4, 0.1, 0.0], atol=1e-12)


def test_initial_state_follows_the_polynomial_start(arm, robots):
    space = ParameterSpace.from_robot(arm)
    theta = np.zeros(space.dim)
    theta[space.offsets] = [0.1, -0.2, 0.3]
    state = initial_state_for(space, theta, arm)
    assert_allclose(state.q, [0.1, -0.2, 0.3])
    assert_allclose(state.qdot, 0.0)
    cart = robots[1]["Cart"]
    space = ParameterSpace.from_robot(cart)
    theta = np.zeros(space.dim)
    theta[space.offsets] = 0.5
    state = initial_state_for(space, theta, cart)
    assert_allclose(state.q, 0.0)
    assert_allclose(state.qdot, 0.5)


def test_wheels_take_velocity_commands(robots):
    cart = robots[1]["Cart"]
    space = ParameterSpace.from_robot(cart)
    theta = np.zeros(space.dim)
    theta[space.offsets] = 1.0
    theta[np.array(space.offsets) + 1] = 1.0
    cap = rollout(space, theta, cart, SIM)
    assert_allclose(cap.qdot, 1.0)
    assert cap.base[-1, 0] == pytest.approx(cart.base.wheel_radius * SIM.horizon)


def test_split_and_join_are_inverse(arm):
    space = ParameterSpace.from_robot(arm)
    theta = np.arange(space.dim, dtype=float) / 10
    assert_allclose(space.join(space.split(theta)), theta)
    assert ParameterSpace.from_dict(space.to_dict()) == space


def test_smoothness_probe(arm):
    space = ParameterSpace.from_robot(arm)
    theta = np.zeros(space.dim)
    theta[space.offsets[0] + 1] = 0.3
    assert smoothness_probe(space, theta, 0.0, arm, SIM) == 0.0
    deviations = [smoothness_probe(space, theta, eps, arm, SIM) for eps in (1e-2, 1e-3, 1e-4)]
    assert deviations[0] > deviations[1] > deviations[2] > 0.0
    bound = SIM.horizon * float(arm.velocity_limit.max()) + 1.0
    for eps, deviation in zip((1e-2, 1e-3, 1e-4), deviations):
        assert deviation <= eps * bound
