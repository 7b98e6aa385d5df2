import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from capcycle.config import SimConfig
from capcycle.errors import DimensionMismatch, MissingAnnotation, NonTreeStructure
from capcycle.fixtures import ARM_REACH_M, build_arm, build_leg
from capcycle.graphstore import PropertyGraph
from capcycle.simkin import (
    Action,
    KinematicAction,
    execute,
    export_capability_table,
    forward_kinematics,
    hold_position,
    initial_state,
    read_capability_table,
    robot_from_assembly,
    step,
)

from conftest import POINTER

DESK = SimConfig()


def _transform_chain(spec, q):
    """Independent oracle: product of 4x4 homogeneous transforms."""
    frame = np.eye(4)
    for kind, index in spec.chain:
        move = np.eye(4)
        if kind == "joint":
            axis = np.asarray(spec.joints[index].axis)
            move[:3, :3] = Rotation.from_rotvec(axis * q[index]).as_matrix()
        else:
            move[0, 3] = spec.links[index].length
        frame = frame @ move
    return frame[:3, 3]


def test_arm_from_assembly(arm):
    assert arm.joint_names == ["pan_tilt.0", "pan_tilt.1", "elbow"]
    assert arm.base is None
    assert arm.end_effector == "gripper"
    assert arm.reach == pytest.approx(ARM_REACH_M)


def test_cart_from_assembly(robots):
    cart = robots[1]["Cart"]
    assert cart.n == 4 and cart.wheel_mask.all()
    assert cart.base.wheel_count == 4
    assert cart.base.wheel_radius == pytest.approx(0.1)
    assert cart.left_wheels.sum() == 2 and cart.right_wheels.sum() == 2


def test_shopping_cart_keeps_subsystem_joint_names(robots):
    combined = robots[1]["NewShoppingCart"]
    subsystems = set(robots[1]["Arm"].joint_names) | set(robots[1]["Cart"].joint_names)
    assert set(combined.joint_names) == subsystems
    assert combined.base.mount_height == pytest.approx(0.3)


def test_connection_loop_is_not_a_tree():
    graph = PropertyGraph()
    assembly = build_arm(graph)
    parts = {graph.vertex(p).label: p for p in graph.parts(assembly)}
    graph.connect(graph.interface_of(parts["pan_tilt"], "proximal"), graph.interface_of(parts["gripper"], "proximal"))
    with pytest.raises(NonTreeStructure):
        robot_from_assembly(graph, assembly)


def test_parts_without_kinematics_are_rejected():
    graph = PropertyGraph()
    ids = build_leg(graph)
    with pytest.raises(MissingAnnotation):
        robot_from_assembly(graph, ids["Leg"])


def test_forward_kinematics_zero_configuration():
    assert_allclose(forward_kinematics(POINTER, np.zeros(1)), [1.0, 0.0, 0.0])


def test_forward_kinematics_matches_transform_chain(arm):
    rng = np.random.default_rng(11)
    for q in rng.uniform(-2.0, 2.0, size=(25, arm.n)):
        assert_allclose(forward_kinematics(arm, q), _transform_chain(arm, q), atol=1e-9)


def test_forward_kinematics_on_a_base_pose(arm):
    local = forward_kinematics(arm, np.zeros(arm.n))
    world = forward_kinematics(arm, np.zeros(arm.n), base_pose=(1.0, 2.0, math.pi / 2))
    assert_allclose(world, [1.0 - local[1], 2.0 + local[0], local[2]], atol=1e-12)


def test_zero_command_from_rest_is_a_fixed_point(arm):
    state = initial_state(arm)
    after = step(arm, DESK, state, Action(KinematicAction(np.zeros(arm.n), DESK.dt)))
    assert_allclose(after.q, state.q)
    assert_allclose(after.qdot, 0.0)
    assert_allclose(after.observation.end_effector, state.observation.end_effector)


def test_position_jump_is_clamped_to_velocity_limit(arm):
    report = []
    command = np.array([1.0, 0.0, 0.0])
    after = step(arm, DESK, initial_state(arm), Action(KinematicAction(command, DESK.dt)), report, 1)
    cap = arm.velocity_limit[0] * DESK.dt
    assert after.q[0] == pytest.approx(cap)
    assert after.qdot[0] == pytest.approx(arm.velocity_limit[0])
    assert [(v.joint, v.kind) for v in report] == [("pan_tilt.0", "velocity")]


def test_equal_wheel_speeds_drive_straight(robots):
    cart = robots[1]["Cart"]
    state = initial_state(cart)
    for _ in range(10):
        state = step(cart, DESK, state, Action(KinematicAction(np.full(4, 2.0), DESK.dt)))
    x, y, theta = state.observation.base_pose
    assert theta == 0.0 and y == 0.0
    assert x == pytest.approx(10 * cart.base.wheel_radius * 2.0 * DESK.dt)


def test_opposite_wheel_speeds_turn_in_place(robots):
    cart = robots[1]["Cart"]
    command = np.where(cart.left_wheels, -1.0, 1.0)
    state = step(cart, DESK, initial_state(cart), Action(KinematicAction(command, DESK.dt)))
    x, y, theta = state.observation.base_pose
    assert x == pytest.approx(0.0) and y == pytest.approx(0.0)
    assert theta == pytest.approx(2 * cart.base.wheel_radius * DESK.dt / cart.base.track_width)


def test_step_rejects_wrong_action_shape(arm):
    with pytest.raises(DimensionMismatch):
        step(arm, DESK, initial_state(arm), Action(KinematicAction(np.zeros(2), DESK.dt)))


def test_execute_state_counts(arm, robots):
    cap = execute(arm, DESK, hold_position(arm, DESK.dt), initial_state(arm))
    assert len(cap) == 201
    assert_allclose(np.diff(cap.t), DESK.dt)

    cart = robots[1]["Cart"]
    long_run = SimConfig(dt=0.02, horizon=20.0)
    assert len(execute(cart, long_run, hold_position(cart, long_run.dt), initial_state(cart))) == 1001


def test_hold_keeps_every_state(arm):
    start = initial_state(arm, q0=np.array([0.3, -0.2, 1.0]))
    cap = execute(arm, DESK, hold_position(arm, DESK.dt), start)
    assert_allclose(cap.q, np.broadcast_to(cap.q[0], cap.q.shape))
    assert_allclose(cap.ee, np.broadcast_to(cap.ee[0], cap.ee.shape))
    assert cap.feasible


def test_start_outside_limits_is_infeasible(arm):
    cap = execute(arm, DESK, hold_position(arm, DESK.dt), initial_state(arm, q0=np.array([0.0, 2.5, 0.0])))
    assert not cap.feasible
    assert {v.kind for v in cap.violations} == {"position"}


def test_capability_table_round_trip(arm, tmp_path):
    start = initial_state(arm, q0=np.array([0.1, 0.2, 0.3]))
    cap = execute(arm, DESK, hold_position(arm, DESK.dt), start)
    export_capability_table(cap, tmp_path / "cap.tsv")
    columns, rows = read_capability_table(tmp_path / "cap.tsv")
    assert columns[:4] == ["t", "q_pan_tilt.0", "q_pan_tilt.1", "q_elbow"]
    assert rows.shape == (201, len(columns))
    assert_allclose(rows[:, 1:4], cap.q)
    assert_allclose(rows[-1, columns.index("ee_x"):columns.index("ee_z") + 1], cap.ee[-1])

