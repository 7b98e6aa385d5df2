"""Deterministic kinematic simulator.

A robot is derived from an Assembly component model whose parts carry
kinematic annotations.  Arm joints track position targets under a velocity
clamp, wheel joints integrate commanded velocities and a skid-steer base
integrates its planar pose.  No dynamics: the execution loop is a pure
function of its inputs.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np

from capcycle.config import SimConfig
from capcycle.errors import DimensionMismatch, IoFailure, KindMismatch, MissingAnnotation, NonTreeStructure
from capcycle.graphstore import Domain, EntityKind, PropertyGraph

logger = logging.getLogger(__name__)

# kinematic annotation keys on component (model) vertices
AXIS = "axis"
LENGTH = "length_m"
LIMIT_LO = "limit_lo_rad"
LIMIT_HI = "limit_hi_rad"
VEL_LIMIT = "vel_limit_rad_s"
WHEEL_RADIUS = "wheel_radius_m"
TRACK_WIDTH = "track_width_m"
SIDE = "side"
END_EFFECTOR = "end_effector"
MOUNT_HEIGHT = "mount_height_m"

_KINEMATIC_KEYS = (AXIS, LENGTH, WHEEL_RADIUS, TRACK_WIDTH)
_LIMIT_SLACK = 1e-12


@dataclass(frozen=True)
class Joint:
    name: str
    axis: tuple[float, float, float]
    lower: float
    upper: float
    velocity_limit: float
    wheel: bool = False
    side: str | None = None

    def __post_init__(self) -> None:
        if not self.wheel and not self.lower < self.upper:
            raise MissingAnnotation(f"joint {self.name}: limits need lower < upper", joint=self.name)
        if not self.velocity_limit > 0:
            raise MissingAnnotation(f"joint {self.name}: velocity limit must be positive", joint=self.name)
        if not math.isclose(float(np.linalg.norm(self.axis)), 1.0, rel_tol=0, abs_tol=1e-12):
            raise MissingAnnotation(f"joint {self.name}: axis must be a unit vector", joint=self.name)


@dataclass(frozen=True)
class Link:
    name: str
    length: float
    parent_joint: str | None


@dataclass(frozen=True)
class WheeledBase:
    wheel_radius: float
    track_width: float
    wheel_count: int
    mount_height: float = 0.0


@dataclass(frozen=True)
class RobotSpec:
    """Executable robot: ordered joints, links and the serial chain to the end effector.

    ``chain`` lists ("joint", i) / ("link", i) elements from the root outward.
    """

    name: str
    joints: tuple[Joint, ...]
    links: tuple[Link, ...] = ()
    chain: tuple[tuple[str, int], ...] = ()
    base: WheeledBase | None = None
    end_effector: str = ""

    def __post_init__(self) -> None:
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise MissingAnnotation(f"robot {self.name}: joint names must be unique")
        if any(j.wheel for j in self.joints) and self.base is None:
            raise MissingAnnotation(f"robot {self.name}: wheel joints need a wheeled base")

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def joint_index(self, name: str) -> int:
        return self.joint_names.index(name)

    @cached_property
    def wheel_mask(self) -> np.ndarray:
        return np.array([j.wheel for j in self.joints], dtype=bool)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([j.lower for j in self.joints], dtype=float)

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([j.upper for j in self.joints], dtype=float)

    @cached_property
    def velocity_limit(self) -> np.ndarray:
        return np.array([j.velocity_limit for j in self.joints], dtype=float)

    @cached_property
    def left_wheels(self) -> np.ndarray:
        return np.array([j.wheel and j.side == "left" for j in self.joints], dtype=bool)

    @cached_property
    def right_wheels(self) -> np.ndarray:
        return np.array([j.wheel and j.side == "right" for j in self.joints], dtype=bool)

    @cached_property
    def reach(self) -> float:
        """Sum of link lengths along the chain."""
        return float(sum(self.links[i].length for kind, i in self.chain if kind == "link"))


# ----------------------------------------------------------------- states

@dataclass(frozen=True)
class ActuatorState:
    q: np.ndarray
    qdot: np.ndarray


@dataclass(frozen=True)
class RobotState:
    actuator: ActuatorState
    sensor: np.ndarray = field(default_factory=lambda: np.zeros(0))
    internal: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class Observation:
    end_effector: np.ndarray
    base_pose: np.ndarray | None = None


@dataclass(frozen=True)
class WorldState:
    robot: RobotState
    observation: Observation

    @property
    def q(self) -> np.ndarray:
        return self.robot.actuator.q

    @property
    def qdot(self) -> np.ndarray:
        return self.robot.actuator.qdot


@dataclass(frozen=True)
class KinematicAction:
    command: np.ndarray
    dt: float


@dataclass(frozen=True)
class Action:
    """Kinematic command plus the perceptive/internal slots left unpopulated at desk scale."""

    kinematic: KinematicAction
    perceptive: None = None
    internal: None = None


CapabilityFunction = Callable[[RobotState, float], Action]


@dataclass(frozen=True)
class Violation:
    step: int
    joint: str
    kind: str
    value: float
    limit: float


@dataclass(frozen=True)
class Capability:
    """Time-stamped world-state trajectory of one execution."""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    ee: np.ndarray
    base: np.ndarray
    joint_names: tuple[str, ...]
    wheels: tuple[bool, ...] = ()
    has_base: bool = False
    violations: tuple[Violation, ...] = ()
    feasible: bool = True
    theta: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.t)

    def state(self, k: int) -> WorldState:
        pose = self.base[k] if self.has_base else None
        return WorldState(RobotState(ActuatorState(self.q[k], self.qdot[k])), Observation(self.ee[k], pose))


# -------------------------------------------------------------- kinematics

def axis_rotation(axis: Sequence[float], angle: float) -> np.ndarray:
    """Rotation matrix about a unit axis (Rodrigues)."""
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def compose_base_pose(base_pose: Sequence[float], point: Sequence[float], mount_height: float = 0.0) -> np.ndarray:
    """Map a point from the base frame into the world frame."""
    x, y, theta = base_pose
    px, py, pz = point
    c, s = math.cos(theta), math.sin(theta)
    return np.array([x + c * px - s * py, y + s * px + c * py, mount_height + pz])


def forward_kinematics(spec: RobotSpec, q: np.ndarray, base_pose: Sequence[float] | None = None) -> np.ndarray:
    """End-effector position; in the world frame when a base pose is given."""
    rotation = np.eye(3)
    position = np.zeros(3)
    for kind, index in spec.chain:
        if kind == "joint":
            rotation = rotation @ axis_rotation(spec.joints[index].axis, float(q[index]))
        else:
            position = position + rotation @ np.array([spec.links[index].length, 0.0, 0.0])
    if base_pose is None:
        return position
    mount = spec.base.mount_height if spec.base is not None else 0.0
    return compose_base_pose(base_pose, position, mount)


def initial_state(
    spec: RobotSpec,
    q0: np.ndarray | None = None,
    qdot0: np.ndarray | None = None,
    base_pose: Sequence[float] | None = None,
) -> WorldState:
    q = np.zeros(spec.n) if q0 is None else np.asarray(q0, dtype=float).copy()
    qdot = np.zeros(spec.n) if qdot0 is None else np.asarray(qdot0, dtype=float).copy()
    if q.shape != (spec.n,) or qdot.shape != (spec.n,):
        raise DimensionMismatch(f"{spec.name} has {spec.n} joints", expected=spec.n)
    pose = None
    if spec.base is not None:
        pose = np.zeros(3) if base_pose is None else np.asarray(base_pose, dtype=float).copy()
    return WorldState(
        RobotState(ActuatorState(q, qdot)),
        Observation(forward_kinematics(spec, q, pose), pose),
    )


def step(
    spec: RobotSpec,
    config: SimConfig,
    state: WorldState,
    action: Action,
    report: list[Violation] | None = None,
    step_index: int = 0,
) -> WorldState:
    """Apply one kinematic action for one time step."""
    command = np.asarray(action.kinematic.command, dtype=float)
    if command.shape != (spec.n,):
        raise DimensionMismatch(f"action has {command.shape} entries, robot has {spec.n} joints", expected=spec.n)
    if not math.isclose(action.kinematic.dt, config.dt, rel_tol=0, abs_tol=1e-12):
        raise DimensionMismatch(f"action interval {action.kinematic.dt} != step {config.dt}")
    dt = config.dt
    q, wheels = state.q, spec.wheel_mask
    cap = spec.velocity_limit * dt

    delta = np.where(wheels, 0.0, command - q)
    rate = np.where(wheels, command, 0.0)
    if report is not None:
        too_fast = (~wheels & (np.abs(delta) > cap + _LIMIT_SLACK)) | (
            wheels & (np.abs(rate) > spec.velocity_limit + _LIMIT_SLACK)
        )
        for i in np.flatnonzero(too_fast):
            value = delta[i] / dt if not wheels[i] else rate[i]
            report.append(Violation(step_index, spec.joints[i].name, "velocity", float(value), float(spec.velocity_limit[i])))
    delta = np.clip(delta, -cap, cap)
    rate = np.clip(rate, -spec.velocity_limit, spec.velocity_limit)
    qdot = np.where(wheels, rate, delta / dt)
    q_next = np.where(wheels, q + rate * dt, q + delta)
    if report is not None:
        _check_positions(spec, q_next, step_index, report)

    pose = state.observation.base_pose
    if spec.base is not None:
        pose = _integrate_base(spec, pose, qdot, dt)
    return WorldState(
        RobotState(ActuatorState(q_next, qdot), state.robot.sensor, state.robot.internal),
        Observation(forward_kinematics(spec, q_next, pose), pose),
    )


def _check_positions(spec: RobotSpec, q: np.ndarray, step_index: int, report: list[Violation]) -> None:
    arm = ~spec.wheel_mask
    low = arm & (q < spec.lower - _LIMIT_SLACK)
    high = arm & (q > spec.upper + _LIMIT_SLACK)
    for i in np.flatnonzero(low):
        report.append(Violation(step_index, spec.joints[i].name, "position", float(q[i]), float(spec.lower[i])))
    for i in np.flatnonzero(high):
        report.append(Violation(step_index, spec.joints[i].name, "position", float(q[i]), float(spec.upper[i])))


def _integrate_base(spec: RobotSpec, pose: np.ndarray | None, qdot: np.ndarray, dt: float) -> np.ndarray:
    base = spec.base
    assert base is not None
    x, y, theta = (0.0, 0.0, 0.0) if pose is None else (float(pose[0]), float(pose[1]), float(pose[2]))
    left = float(np.mean(qdot[spec.left_wheels])) if spec.left_wheels.any() else 0.0
    right = float(np.mean(qdot[spec.right_wheels])) if spec.right_wheels.any() else 0.0
    v = base.wheel_radius * (right + left) / 2.0
    omega = base.wheel_radius * (right - left) / base.track_width
    return np.array([x + v * math.cos(theta) * dt, y + v * math.sin(theta) * dt, theta + omega * dt])


def execute(
    spec: RobotSpec,
    config: SimConfig,
    cap_fn: CapabilityFunction,
    initial: WorldState,
    theta: np.ndarray | None = None,
) -> Capability:
    """Run the execution loop over the full horizon.

    The capability function is queried at t^{k+1} for the action that carries
    the robot from t^k to t^{k+1}.
    """
    steps, dt, n = config.steps, config.dt, spec.n
    t = np.arange(steps + 1) * dt
    q = np.empty((steps + 1, n))
    qdot = np.empty((steps + 1, n))
    ee = np.empty((steps + 1, 3))
    base = np.zeros((steps + 1, 3))
    violations: list[Violation] = []

    state = initial
    _check_positions(spec, state.q, 0, violations)
    for k in range(steps + 1):
        if k > 0:
            action = cap_fn(state.robot, float(t[k]))
            state = step(spec, config, state, action, violations, k)
        q[k], qdot[k], ee[k] = state.q, state.qdot, state.observation.end_effector
        if state.observation.base_pose is not None:
            base[k] = state.observation.base_pose
    return Capability(
        t=t, q=q, qdot=qdot, ee=ee, base=base,
        joint_names=tuple(spec.joint_names),
        wheels=tuple(bool(w) for w in spec.wheel_mask),
        has_base=spec.base is not None,
        violations=tuple(violations),
        feasible=not violations,
        theta=None if theta is None else np.asarray(theta, dtype=float).copy(),
    )


def hold_position(spec: RobotSpec, dt: float) -> CapabilityFunction:
    """Capability function that keeps arm joints where they are and wheels still."""

    def hold(robot: RobotState, t: float) -> Action:
        return Action(KinematicAction(np.where(spec.wheel_mask, 0.0, robot.actuator.q), dt))

    return hold


# ----------------------------------------------------------- table format

def table_columns(joint_names: Sequence[str]) -> list[str]:
    return (
        ["t"]
        + [f"q_{name}" for name in joint_names]
        + [f"qd_{name}" for name in joint_names]
        + ["ee_x", "ee_y", "ee_z", "base_x", "base_y", "base_theta"]
    )


def capability_table(cap: Capability) -> np.ndarray:
    return np.column_stack([cap.t, cap.q, cap.qdot, cap.ee, cap.base])


def export_capability_table(cap: Capability, path: str | Path) -> None:
    header = "\t".join(table_columns(cap.joint_names))
    try:
        np.savetxt(path, capability_table(cap), delimiter="\t", header=header, comments="", fmt="%.17g")
    except OSError as exc:
        raise IoFailure(f"cannot write capability table {path}: {exc}", path=str(path)) from exc


def read_capability_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, encoding="utf-8") as handle:
            columns = handle.readline().rstrip("\n").split("\t")
        rows = np.loadtxt(path, delimiter="\t", skiprows=1, ndmin=2)
    except OSError as exc:
        raise IoFailure(f"cannot read capability table {path}: {exc}", path=str(path)) from exc
    return columns, rows


# ---------------------------------------------------- assembly to robot

def robot_from_assembly(graph: PropertyGraph, assembly: str) -> RobotSpec:
    """Derive a RobotSpec from an annotated Assembly component model."""
    model = graph.vertex(assembly)
    if model.kind is not EntityKind.COMPONENT_MODEL or model.domain is not Domain.ASSEMBLY:
        raise KindMismatch(f"{assembly} is not an Assembly component model", id=assembly)
    parts = graph.parts(assembly)
    if not parts:
        raise MissingAnnotation(f"assembly {model.label} has no parts", id=assembly)
    props = {p: graph.properties(p) for p in parts}
    for part, p in props.items():
        if not any(key in p for key in _KINEMATIC_KEYS):
            raise MissingAnnotation(
                f"part {p['label']} carries none of {', '.join(_KINEMATIC_KEYS)}", id=part
            )

    topology = _part_topology(graph, parts)
    bases = [p for p in parts if TRACK_WIDTH in props[p]]
    if len(bases) > 1:
        raise NonTreeStructure(f"assembly {model.label} has {len(bases)} bases", id=assembly)
    root = bases[0] if bases else parts[0]
    order, parent = _traverse(topology, root)

    joints: list[Joint] = []
    joint_of_part: dict[str, list[int]] = {}
    wheel_count = 0
    for part in order:
        p = props[part]
        if WHEEL_RADIUS in p:
            side = p.get(SIDE) or ("left" if wheel_count % 2 == 0 else "right")
            joints.append(Joint(
                name=p["label"],
                axis=_unit(_parse_axis(p.get(AXIS, "0,1,0"), part)),
                lower=-math.inf, upper=math.inf,
                velocity_limit=_required_float(p, VEL_LIMIT, part),
                wheel=True, side=side,
            ))
            joint_of_part[part] = [len(joints) - 1]
            wheel_count += 1
        elif AXIS in p:
            axes = [_unit(_parse_axis(a, part)) for a in p[AXIS].split(";")]
            lows = _required_floats(p, LIMIT_LO, part, len(axes))
            highs = _required_floats(p, LIMIT_HI, part, len(axes))
            vels = _required_floats(p, VEL_LIMIT, part, len(axes))
            joint_of_part[part] = []
            for k, axis in enumerate(axes):
                name = p["label"] if len(axes) == 1 else f"{p['label']}.{k}"
                joints.append(Joint(name, axis, lows[k], highs[k], vels[k]))
                joint_of_part[part].append(len(joints) - 1)

    end_part = _end_effector(order, props, topology, root)
    path = _path_to(parent, end_part)
    links: list[Link] = []
    chain: list[tuple[str, int]] = []
    last_joint: str | None = None
    for part in path:
        p = props[part]
        if WHEEL_RADIUS in p or TRACK_WIDTH in p:
            continue
        for index in joint_of_part.get(part, []):
            chain.append(("joint", index))
            last_joint = joints[index].name
        if LENGTH in p:
            links.append(Link(p["label"], _required_float(p, LENGTH, part), last_joint))
            chain.append(("link", len(links) - 1))

    base = None
    if bases:
        bp = props[bases[0]]
        radii = {_required_float(props[w], WHEEL_RADIUS, w) for w in order if WHEEL_RADIUS in props[w]}
        if len(radii) != 1:
            raise MissingAnnotation(f"base of {model.label} needs wheels of one radius", id=bases[0])
        base = WheeledBase(
            wheel_radius=radii.pop(),
            track_width=_required_float(bp, TRACK_WIDTH, bases[0]),
            wheel_count=wheel_count,
            mount_height=float(bp.get(MOUNT_HEIGHT, 0.0)),
        )
    spec = RobotSpec(
        name=model.label,
        joints=tuple(joints),
        links=tuple(links),
        chain=tuple(chain),
        base=base,
        end_effector=props[end_part]["label"],
    )
    logger.info("derived robot %s: %d joints, reach %.3f m", spec.name, spec.n, spec.reach)
    return spec


def _part_topology(graph: PropertyGraph, parts: list[str]) -> nx.MultiGraph:
    topology = nx.MultiGraph()
    topology.add_nodes_from(parts)
    for a, b, edge_id in graph.connections_between(parts):
        if a == b:
            raise NonTreeStructure(f"part {a} is connected to itself", id=edge_id)
        topology.add_edge(a, b, key=edge_id)
    if not nx.is_connected(topology):
        raise NonTreeStructure("assembly parts are not connected into one structure")
    if not nx.is_forest(topology):
        raise NonTreeStructure("assembly contains a closed kinematic loop")
    return topology


def _traverse(topology: nx.MultiGraph, root: str) -> tuple[list[str], dict[str, str | None]]:
    order: list[str] = []
    parent: dict[str, str | None] = {root: None}
    stack = [root]
    while stack:
        node = stack.pop()
        order.append(node)
        children = sorted(
            ((min(topology[node][nb]), nb) for nb in topology.neighbors(node) if nb not in parent),
        )
        for _, child in children:
            parent[child] = node
        stack.extend(child for _, child in reversed(children))
    return order, parent


def _end_effector(order: list[str], props: dict[str, dict[str, str]], topology: nx.MultiGraph, root: str) -> str:
    marked = [p for p in order if props[p].get(END_EFFECTOR, "").lower() == "true"]
    if marked:
        return marked[0]
    leaves = [
        p for p in order
        if p != root and topology.degree(p) == 1 and WHEEL_RADIUS not in props[p]
    ]
    return leaves[-1] if leaves else root


def _path_to(parent: dict[str, str | None], node: str) -> list[str]:
    path = []
    current: str | None = node
    while current is not None:
        path.append(current)
        current = parent[current]
    return path[::-1]


def _parse_axis(text: str, part: str) -> tuple[float, float, float]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise MissingAnnotation(f"part {part}: axis {text!r} is not numeric", id=part) from exc
    if len(values) != 3:
        raise MissingAnnotation(f"part {part}: axis needs three components", id=part)
    return values  # type: ignore[return-value]


def _unit(axis: tuple[float, float, float]) -> tuple[float, float, float]:
    norm = math.sqrt(sum(a * a for a in axis))
    if norm == 0:
        raise MissingAnnotation("joint axis must be non-zero")
    return (axis[0] / norm, axis[1] / norm, axis[2] / norm)


def _required_float(props: dict[str, str], key: str, part: str) -> float:
    return _required_floats(props, key, part, 1)[0]


def _required_floats(props: dict[str, str], key: str, part: str, count: int) -> list[float]:
    if key not in props:
        raise MissingAnnotation(f"part {props.get('label', part)} lacks {key}", id=part, key=key)
    try:
        values = [float(v) for v in props[key].split(";")]
    except ValueError as exc:
        raise MissingAnnotation(f"part {part}: {key} is not numeric", id=part, key=key) from exc
    if len(values) == 1 and count > 1:
        values = values * count
    if len(values) != count:
        raise MissingAnnotation(f"part {part}: {key} needs {count} values", id=part, key=key)
    return values
