"""Polynomial capability-function model.

Every joint follows the phase polynomial

    q(phi) = -th0 (phi - 1) + th1 phi + sum_{i>=2} th_i (phi^(i-1) - 1) phi

so th0 is the start value and th1 the end value; higher coefficients only
bend the path in between.  Arm joints read q as a position target, wheel
joints as a velocity target.  The parameter vector is joint-major.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from capcycle.config import SimConfig
from capcycle.errors import DimensionMismatch, ParameterOutOfBounds, PhaseOutOfRange
from capcycle.simkin import (
    Action,
    Capability,
    KinematicAction,
    RobotSpec,
    RobotState,
    WorldState,
    execute,
    initial_state,
)

logger = logging.getLogger(__name__)

_PHASE_SLACK = 1e-9


@dataclass(frozen=True)
class JointBlock:
    joint: str
    count: int
    lower: float
    upper: float
    wheel: bool = False

    def __post_init__(self) -> None:
        if self.count < 2:
            raise DimensionMismatch(f"joint {self.joint} needs at least 2 coefficients", joint=self.joint)
        if not self.lower < self.upper:
            raise ParameterOutOfBounds(f"joint {self.joint}: bounds need lower < upper", joint=self.joint)


@dataclass(frozen=True)
class ParameterSpace:
    blocks: tuple[JointBlock, ...]

    @classmethod
    def from_robot(
        cls,
        spec: RobotSpec,
        arm_coefficients: int = 5,
        wheel_coefficients: int = 3,
        arm_bound: float = math.pi,
        wheel_bound: float = 2 * math.pi,
    ) -> "ParameterSpace":
        blocks = []
        for joint in spec.joints:
            if joint.wheel:
                blocks.append(JointBlock(joint.name, wheel_coefficients, -wheel_bound, wheel_bound, True))
            else:
                blocks.append(JointBlock(joint.name, arm_coefficients, -arm_bound, arm_bound))
        return cls(tuple(blocks))

    @property
    def dim(self) -> int:
        return sum(b.count for b in self.blocks)

    @property
    def joint_names(self) -> list[str]:
        return [b.joint for b in self.blocks]

    @property
    def offsets(self) -> list[int]:
        return [int(o) for o in np.cumsum([0] + [b.count for b in self.blocks])[:-1]]

    @property
    def lower(self) -> np.ndarray:
        return np.concatenate([np.full(b.count, b.lower) for b in self.blocks]) if self.blocks else np.zeros(0)

    @property
    def upper(self) -> np.ndarray:
        return np.concatenate([np.full(b.count, b.upper) for b in self.blocks]) if self.blocks else np.zeros(0)

    @property
    def max_count(self) -> int:
        return max((b.count for b in self.blocks), default=0)

    def column_names(self) -> list[str]:
        return [f"{b.joint}:{i}" for b in self.blocks for i in range(b.count)]

    def split(self, theta: np.ndarray) -> list[np.ndarray]:
        theta = self._shape(theta)
        return [theta[o:o + b.count] for o, b in zip(self.offsets, self.blocks)]

    def join(self, blocks: list[np.ndarray]) -> np.ndarray:
        if len(blocks) != len(self.blocks) or any(len(x) != b.count for x, b in zip(blocks, self.blocks)):
            raise DimensionMismatch("block sizes do not match the parameter space")
        return np.concatenate([np.asarray(x, dtype=float) for x in blocks])

    def coefficient_matrix(self, theta: np.ndarray) -> np.ndarray:
        """(joints, max_count) matrix; short blocks padded with zero high-order terms."""
        matrix = np.zeros((len(self.blocks), self.max_count))
        for row, block in enumerate(self.split(theta)):
            matrix[row, :len(block)] = block
        return matrix

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def clip(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.lower, self.upper)

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            return False
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def check(self, theta: np.ndarray) -> np.ndarray:
        theta = self._shape(theta)
        outside = np.flatnonzero((theta < self.lower) | (theta > self.upper))
        if outside.size:
            names = self.column_names()
            raise ParameterOutOfBounds(
                f"{len(outside)} coefficient(s) outside bounds", coefficients=[names[i] for i in outside]
            )
        return theta

    def embed(self, theta_sub: np.ndarray, sub_space: "ParameterSpace") -> np.ndarray:
        """Place a subsystem vector into this space by joint name; other joints get zeros."""
        full = np.zeros(self.dim)
        index = {b.joint: (o, b) for o, b in zip(self.offsets, self.blocks)}
        for block, values in zip(sub_space.blocks, sub_space.split(theta_sub)):
            if block.joint not in index:
                raise DimensionMismatch(f"joint {block.joint} is not part of the target space", joint=block.joint)
            offset, target = index[block.joint]
            if target.count != block.count or target.wheel != block.wheel:
                raise DimensionMismatch(f"joint {block.joint} has a different block layout", joint=block.joint)
            full[offset:offset + block.count] = values
        return full

    def to_dict(self) -> dict[str, Any]:
        return {"blocks": [
            {"joint": b.joint, "count": b.count, "lower": b.lower, "upper": b.upper, "wheel": b.wheel}
            for b in self.blocks
        ]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ParameterSpace":
        return cls(tuple(JointBlock(**b) for b in data["blocks"]))

    def _shape(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DimensionMismatch(f"theta has shape {theta.shape}, space needs ({self.dim},)", expected=self.dim)
        return theta


def poly_basis(phi: float, count: int) -> np.ndarray:
    """Basis values [1-phi, phi, (phi-1)phi, (phi^2-1)phi, ...] at one phase."""
    basis = np.empty(count)
    basis[0] = 1.0 - phi
    basis[1] = phi
    for i in range(2, count):
        basis[i] = (phi ** (i - 1) - 1.0) * phi
    return basis


def eval_poly(theta_joint: np.ndarray, phi: float) -> float:
    if not 0.0 <= phi <= 1.0:
        raise PhaseOutOfRange(f"phase {phi} outside [0, 1]", phase=phi)
    coefficients = np.asarray(theta_joint, dtype=float)
    if coefficients.ndim != 1 or len(coefficients) < 2:
        raise DimensionMismatch("a joint polynomial needs at least two coefficients")
    return float(coefficients @ poly_basis(phi, len(coefficients)))


@dataclass(frozen=True)
class PolynomialCapabilityFunction:
    """Maps (robot state, t) to the polynomial command at phase t / T."""

    coefficients: np.ndarray
    horizon: float
    dt: float

    def command(self, t: float) -> np.ndarray:
        phi = t / self.horizon
        if phi > 1.0 and phi <= 1.0 + _PHASE_SLACK:
            phi = 1.0
        if not 0.0 <= phi <= 1.0:
            raise PhaseOutOfRange(f"time {t} outside [0, {self.horizon}]", time=t)
        return self.coefficients @ poly_basis(phi, self.coefficients.shape[1])

    def __call__(self, robot: RobotState, t: float) -> Action:
        return Action(KinematicAction(self.command(t), self.dt))


def make_capability_function(
    space: ParameterSpace,
    theta: np.ndarray,
    spec: RobotSpec,
    sim: SimConfig,
) -> PolynomialCapabilityFunction:
    if space.joint_names != spec.joint_names:
        raise DimensionMismatch(
            f"parameter space covers {space.joint_names}, robot has {spec.joint_names}",
        )
    space.check(theta)
    return PolynomialCapabilityFunction(space.coefficient_matrix(theta), sim.horizon, sim.dt)


def initial_state_for(space: ParameterSpace, theta: np.ndarray, spec: RobotSpec) -> WorldState:
    """Start where the polynomial starts: arm q = th0, wheel qdot = th0."""
    start = np.array([block[0] for block in space.split(theta)])
    wheels = spec.wheel_mask
    return initial_state(spec, np.where(wheels, 0.0, start), np.where(wheels, start, 0.0))


def rollout(space: ParameterSpace, theta: np.ndarray, spec: RobotSpec, sim: SimConfig) -> Capability:
    """Simulate the capability encoded by theta."""
    cap_fn = make_capability_function(space, theta, spec, sim)
    return execute(spec, sim, cap_fn, initial_state_for(space, theta, spec), theta=theta)


def smoothness_probe(
    space: ParameterSpace,
    theta: np.ndarray,
    epsilon: float,
    spec: RobotSpec,
    sim: SimConfig,
) -> float:
    """Largest joint-trajectory deviation over single-coordinate nudges of size epsilon."""
    base = rollout(space, theta, spec, sim)
    worst = 0.0
    for i in range(space.dim):
        nudged = np.array(theta, dtype=float)
        nudged[i] += epsilon
        if nudged[i] > space.upper[i]:
            nudged[i] = theta[i] - epsilon
        if nudged[i] < space.lower[i]:
            raise ParameterOutOfBounds(f"epsilon {epsilon} does not fit coordinate {i}", coordinate=i)
        other = rollout(space, nudged, spec, sim)
        worst = max(worst, float(np.max(np.abs(other.q - base.q))))
    logger.debug("smoothness probe eps=%g: %g", epsilon, worst)
    return worst
