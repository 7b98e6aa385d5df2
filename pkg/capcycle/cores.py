"""Behavior models, semantic annotations and cognitive cores.

A behavior model names a behavior and constrains feature spaces, either to a
range (MinMax) or to a value supplied at execution time (Variable).  A
cognitive core grounds it on one robot's clusters; sampling a core maximizes
the weighted sum of the log-densities of the relevant cluster models with a
particle swarm and simulates the winner.
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import yaml
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from capcycle.cfm import JointBlock, ParameterSpace, PolynomialCapabilityFunction, initial_state_for, rollout
from capcycle.cluster import ClusterStore, FeatureClustering, feature_space
from capcycle.config import SamplerConfig, SimConfig
from capcycle.errors import (
    DimensionMismatch,
    EmptyAnnotation,
    IoFailure,
    MissingTarget,
    NoFeasibleSample,
    OverlappingActuators,
    ProtectedLabel,
    SchemaViolation,
    UnknownArtifact,
    UnknownOntologyPolicyViolation,
    UnsatisfiableConstraint,
)
from capcycle.simkin import Action, Capability, KinematicAction, RobotSpec, RobotState, execute
from capcycle.swarm import ParticleSwarm

if TYPE_CHECKING:
    from capcycle.reason import Ontology

logger = logging.getLogger(__name__)


class ConstraintKind(str, Enum):
    MINMAX = "minmax"
    VARIABLE = "variable"


@dataclass(frozen=True)
class Constraint:
    space: str
    kind: ConstraintKind
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self) -> None:
        if self.kind is ConstraintKind.MINMAX:
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise UnsatisfiableConstraint(
                    f"range constraint on {self.space} needs lo < hi", space=self.space
                )

    @classmethod
    def minmax(cls, space: str, lo: float, hi: float) -> "Constraint":
        return cls(space, ConstraintKind.MINMAX, float(lo), float(hi))

    @classmethod
    def variable(cls, space: str) -> "Constraint":
        return cls(space, ConstraintKind.VARIABLE)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"space": self.space, "kind": self.kind.value}
        if self.kind is ConstraintKind.MINMAX:
            data.update(lo=self.lo, hi=self.hi)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Constraint":
        kind = ConstraintKind(data["kind"])
        if kind is ConstraintKind.MINMAX:
            return cls.minmax(data["space"], data["lo"], data["hi"])
        return cls.variable(data["space"])


def _unique_spaces(constraints: Sequence[Constraint], owner: str) -> None:
    spaces = [c.space for c in constraints]
    if len(set(spaces)) != len(spaces):
        raise SchemaViolation(f"{owner} constrains a feature space twice", id=owner)


@dataclass(frozen=True)
class BehaviorModel:
    label: str
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self) -> None:
        if not self.label:
            raise EmptyAnnotation("behavior models need a label")
        _unique_spaces(self.constraints, self.label)

    def to_dict(self) -> dict[str, Any]:
        return {"label": self.label, "constraints": [c.to_dict() for c in self.constraints]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BehaviorModel":
        return cls(str(data["label"]), tuple(Constraint.from_dict(c) for c in data.get("constraints", [])))


@dataclass(frozen=True)
class SemanticAnnotation:
    labels: tuple[str, ...]
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self) -> None:
        labels = tuple(sorted({str(label) for label in self.labels if str(label).strip()}))
        if not labels:
            raise EmptyAnnotation("a semantic annotation needs at least one label")
        object.__setattr__(self, "labels", labels)
        _unique_spaces(self.constraints, ",".join(labels))

    def constraint(self, space: str) -> Constraint | None:
        return next((c for c in self.constraints if c.space == space), None)

    def to_dict(self) -> dict[str, Any]:
        return {"labels": list(self.labels), "constraints": [c.to_dict() for c in self.constraints]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SemanticAnnotation":
        return cls(tuple(data["labels"]), tuple(Constraint.from_dict(c) for c in data.get("constraints", [])))


DEFAULT_BEHAVIOR_MODELS = (
    BehaviorModel("reach", (
        Constraint.minmax("dir", 0.8, 1.0),
        Constraint.variable("start"),
        Constraint.variable("end"),
    )),
    BehaviorModel("reach-unconstrained", (Constraint.variable("start"), Constraint.variable("end"))),
)


def load_behavior_models(path: str | Path) -> dict[str, BehaviorModel]:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise IoFailure(f"cannot read behavior models {path}: {exc}", path=str(path)) from exc
    models = [BehaviorModel.from_dict(item) for item in data.get("behavior_models", [])]
    return {m.label: m for m in models}


def save_behavior_models(models: Iterable[BehaviorModel], path: str | Path) -> None:
    doc = {"behavior_models": [m.to_dict() for m in sorted(models, key=lambda m: m.label)]}
    try:
        Path(path).write_text(yaml.safe_dump(doc, sort_keys=True), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write behavior models {path}: {exc}", path=str(path)) from exc


# -------------------------------------------------------------------- cores

@dataclass(frozen=True)
class CognitiveCore:
    """Immutable grounding of a behavior model on one robot; edits make a new version."""

    id: str
    robot: str
    behavior_model: BehaviorModel
    annotation: SemanticAnnotation
    linked: dict[str, tuple[int, ...]] = field(default_factory=dict)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    version: int = 1

    @property
    def labels(self) -> tuple[str, ...]:
        return self.annotation.labels

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "version": self.version,
            "robot": self.robot,
            "behavior_model": self.behavior_model.to_dict(),
            "annotation": self.annotation.to_dict(),
            "linked": {space: list(ids) for space, ids in sorted(self.linked.items())},
            "sampler": self.sampler.model_dump(mode="json"),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CognitiveCore":
        return cls(
            id=data["id"],
            version=int(data["version"]),
            robot=data["robot"],
            behavior_model=BehaviorModel.from_dict(data["behavior_model"]),
            annotation=SemanticAnnotation.from_dict(data["annotation"]),
            linked={space: tuple(ids) for space, ids in data["linked"].items()},
            sampler=SamplerConfig.model_validate(data["sampler"]),
        )


def core_id(robot: str, behavior: str) -> str:
    return f"{robot}-{behavior}"


def save_core(core: CognitiveCore, directory: str | Path) -> Path:
    path = Path(directory) / f"{core.id}.v{core.version}.json"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(core.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write core {path}: {exc}", path=str(path)) from exc
    return path


_VERSIONED = re.compile(r"^(?P<id>.+)\.v(?P<version>\d+)\.json$")


def _core_files(directory: Path) -> dict[str, dict[int, Path]]:
    found: dict[str, dict[int, Path]] = {}
    if directory.is_dir():
        for path in sorted(directory.iterdir()):
            match = _VERSIONED.match(path.name)
            if match:
                found.setdefault(match["id"], {})[int(match["version"])] = path
    return found


def load_core(directory: str | Path, core: str, version: int | None = None) -> CognitiveCore:
    versions = _core_files(Path(directory)).get(core, {})
    if not versions or (version is not None and version not in versions):
        raise UnknownArtifact(f"no core {core!r}" + (f" version {version}" if version else ""), core=core)
    path = versions[version if version is not None else max(versions)]
    try:
        return CognitiveCore.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError) as exc:
        raise IoFailure(f"cannot read core {path}: {exc}", path=str(path)) from exc


def list_cores(directory: str | Path) -> list[CognitiveCore]:
    """Latest version of every stored core, ordered by robot then id."""
    cores = [load_core(directory, cid) for cid in sorted(_core_files(Path(directory)))]
    return sorted(cores, key=lambda c: (c.robot, c.id))


# ---------------------------------------------------------------- grounding

def _target_vector(target: Sequence[float] | float, clustering: FeatureClustering) -> np.ndarray:
    vector = np.atleast_1d(np.asarray(target, dtype=float))
    dim = clustering.clusters[0].centroid.shape[0]
    if vector.shape != (dim,):
        raise DimensionMismatch(f"target for {clustering.space} needs {dim} values", space=clustering.space)
    return vector


def nearest_centroid(clustering: FeatureClustering, target: Sequence[float] | float) -> int:
    """Cluster whose centroid is closest to the target; ties go to the lowest index."""
    vector = _target_vector(target, clustering)
    distances = [feature_distance(clustering.metric, c.centroid, vector) for c in clustering.clusters]
    return int(np.argmin(distances))


def feature_distance(metric: str, a: np.ndarray, b: np.ndarray) -> float:
    return float(cdist(np.atleast_2d(a), np.atleast_2d(b), metric)[0, 0])


def cc(
    clustering: FeatureClustering,
    index: int,
    constraint: Constraint,
    target: Sequence[float] | float | None = None,
) -> int:
    """Constraint check of one cluster: 1 when it satisfies the constraint."""
    if clustering.space != constraint.space:
        raise DimensionMismatch(
            f"cluster lives in {clustering.space}, constraint in {constraint.space}", space=constraint.space
        )
    if constraint.kind is ConstraintKind.MINMAX:
        centroid = clustering.clusters[index].centroid
        return int(bool(np.all((constraint.lo < centroid) & (centroid < constraint.hi))))
    if target is None:
        raise MissingTarget(f"variable constraint on {constraint.space} needs a target", space=constraint.space)
    return int(nearest_centroid(clustering, target) == index)


def create_core(
    robot: str,
    behavior: BehaviorModel,
    store: ClusterStore,
    sampler: SamplerConfig | None = None,
) -> CognitiveCore:
    """Link every cluster passing each range constraint; variable constraints wait for targets."""
    linked: dict[str, tuple[int, ...]] = {}
    for constraint in behavior.constraints:
        clustering = store.clustering(constraint.space)
        if constraint.kind is not ConstraintKind.MINMAX:
            continue
        passing = tuple(j for j in range(len(clustering.clusters)) if cc(clustering, j, constraint))
        if not passing:
            raise UnsatisfiableConstraint(
                f"no {constraint.space} cluster of {robot} has a centroid in "
                f"({constraint.lo}, {constraint.hi})",
                space=constraint.space,
                centroids=[float(c.centroid[0]) for c in clustering.clusters],
            )
        linked[constraint.space] = passing
    core = CognitiveCore(
        id=core_id(robot, behavior.label),
        robot=robot,
        behavior_model=behavior,
        annotation=SemanticAnnotation((behavior.label,), behavior.constraints),
        linked=linked,
        sampler=sampler or SamplerConfig(),
    )
    logger.info("created core %s linking %s", core.id, {s: len(ids) for s, ids in linked.items()})
    return core


@dataclass
class ModelGroup:
    """Clusters standing for one constraint; their densities are pooled."""

    constraint: Constraint
    clusters: tuple[int, ...]
    weight: float
    floor: float
    target: np.ndarray | None = None


@dataclass
class CoreSample:
    core: str
    theta: np.ndarray
    log_density: float
    threshold: float
    capability: Capability
    report: list[dict[str, Any]]
    alternates: list[tuple[np.ndarray, float]] = field(default_factory=list)
    history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "core": self.core,
            "theta": self.theta.tolist(),
            "log_density": self.log_density,
            "threshold": self.threshold,
            "feasible": self.capability.feasible,
            "end_effector": self.capability.ee[-1].tolist(),
            "report": self.report,
            "alternates": [{"theta": t.tolist(), "log_density": v} for t, v in self.alternates],
        }


def resolve_groups(
    core: CognitiveCore,
    store: ClusterStore,
    targets: Mapping[str, Sequence[float] | float],
    sampler: SamplerConfig,
) -> list[ModelGroup]:
    groups = []
    for constraint in core.annotation.constraints:
        clustering = store.clustering(constraint.space)
        target = None
        if constraint.kind is ConstraintKind.MINMAX:
            indices = core.linked.get(constraint.space, ())
            if not indices:
                raise UnsatisfiableConstraint(f"core {core.id} has no cluster for {constraint.space}")
        else:
            if constraint.space not in targets:
                raise MissingTarget(f"core {core.id} needs a target for {constraint.space}", space=constraint.space)
            target = _target_vector(targets[constraint.space], clustering)
            indices = (nearest_centroid(clustering, target),)
        groups.append(ModelGroup(
            constraint=constraint,
            clusters=indices,
            weight=sampler.weight(constraint.space),
            floor=min(clustering.clusters[j].log_density_floor for j in indices),
            target=target,
        ))
    return groups


def joint_log_density(groups: Sequence[ModelGroup], store: ClusterStore, theta: np.ndarray) -> np.ndarray:
    """Weighted sum over constraints of the pooled cluster log-densities, per row of theta."""
    rows = np.atleast_2d(theta)
    total = np.zeros(len(rows))
    for group in groups:
        clustering = store.clustering(group.constraint.space)
        logs = np.array([clustering.clusters[j].model.log_density(rows) for j in group.clusters])
        total += group.weight * logsumexp(logs, axis=0)
    return total


def constraint_report(
    groups: Sequence[ModelGroup], store: ClusterStore, capability: Capability
) -> list[dict[str, Any]]:
    report = []
    for group in groups:
        c = group.constraint
        clustering = store.clustering(c.space)
        value = feature_space(c.space)(capability)[0]
        entry: dict[str, Any] = {"space": c.space, "kind": c.kind.value, "value": value.tolist()}
        if c.kind is ConstraintKind.MINMAX:
            entry.update(lo=c.lo, hi=c.hi, satisfied=bool(np.all((c.lo <= value) & (value <= c.hi))))
        else:
            assert group.target is not None
            entry.update(
                target=group.target.tolist(),
                distance=feature_distance(clustering.metric, value, group.target),
                cluster=group.clusters[0],
                satisfied=nearest_centroid(clustering, value) == group.clusters[0],
            )
        report.append(entry)
    return report


def sample_core(
    core: CognitiveCore,
    targets: Mapping[str, Sequence[float] | float],
    store: ClusterStore,
    spec: RobotSpec,
    sampler: SamplerConfig | None = None,
    sim: SimConfig | None = None,
) -> CoreSample:
    """Maximize the joint cluster density, simulate the best parameters and check the result."""
    sampler = sampler or core.sampler
    sim = sim or store.sim
    groups = resolve_groups(core, store, targets, sampler)
    if not groups:
        raise NoFeasibleSample(f"core {core.id} has no constraints to sample from", core=core.id)
    threshold = float(sum(g.weight * g.floor for g in groups))

    result = ParticleSwarm(sampler).maximize(
        lambda x: joint_log_density(groups, store, x),
        store.space.lower,
        store.space.upper,
        np.random.default_rng(sampler.seed),
    )
    if not result.best_value >= threshold:
        raise NoFeasibleSample(
            f"best joint log-density {result.best_value:.3f} below threshold {threshold:.3f}",
            core=core.id, best=result.best_value, threshold=threshold,
        )
    capability = rollout(store.space, result.best, spec, sim)
    sample = CoreSample(
        core=core.id,
        theta=result.best,
        log_density=result.best_value,
        threshold=threshold,
        capability=capability,
        report=constraint_report(groups, store, capability),
        alternates=result.alternates(sampler.alternates),
        history=result.history,
    )
    logger.info("sampled %s: log-density %.3f (threshold %.3f)", core.id, sample.log_density, threshold)
    return sample


def annotate_core(
    core: CognitiveCore,
    add: Iterable[str] = (),
    remove: Iterable[str] = (),
    ontology: "Ontology | None" = None,
    strict: bool = False,
) -> CognitiveCore:
    """Reviewer edit of the label set; returns the core itself when nothing changes."""
    add, remove = set(add), set(remove)
    if core.behavior_model.label in remove:
        raise ProtectedLabel(f"{core.behavior_model.label} is inherited from the behavior model", core=core.id)
    if strict:
        if ontology is None:
            from capcycle.reason import Ontology

            ontology = Ontology.default()
        unknown = sorted(label for label in add if label not in ontology)
        if unknown:
            raise UnknownOntologyPolicyViolation(f"labels not in the ontology: {unknown}", labels=unknown)
    labels = (set(core.labels) | add) - remove
    if not labels:
        raise EmptyAnnotation("annotation would lose every label", core=core.id)
    if labels == set(core.labels):
        return core
    annotation = SemanticAnnotation(tuple(labels), core.annotation.constraints)
    logger.info("annotated %s v%d: %s", core.id, core.version + 1, ", ".join(annotation.labels))
    return replace(core, annotation=annotation, version=core.version + 1)


# --------------------------------------------------------------- parallel

@dataclass
class ParallelTask:
    """One subsystem core with its own clusters and robot."""

    core: CognitiveCore
    targets: Mapping[str, Sequence[float] | float]
    store: ClusterStore
    spec: RobotSpec


@dataclass
class ParallelResult:
    capability: Capability
    theta: np.ndarray
    space: ParameterSpace
    samples: list[CoreSample]


def combined_space(spec: RobotSpec, spaces: Sequence[ParameterSpace]) -> ParameterSpace:
    """Parameter space of the combined robot, reusing each subsystem's joint blocks."""
    owner: dict[str, JointBlock] = {}
    for space in spaces:
        for block in space.blocks:
            if block.joint in owner:
                raise OverlappingActuators(f"joint {block.joint} is driven by two cores", joint=block.joint)
            owner[block.joint] = block
    unknown = sorted(set(owner) - set(spec.joint_names))
    if unknown:
        raise DimensionMismatch(f"joints {unknown} are not part of {spec.name}", joints=unknown)
    blocks = []
    for joint in spec.joints:
        default = JointBlock(joint.name, 2, -1.0, 1.0, joint.wheel)
        blocks.append(owner.get(joint.name, default))
    return ParameterSpace(tuple(blocks))


@dataclass(frozen=True)
class MergedCapabilityFunction:
    """Per-subsystem polynomial commands on their own joints and horizons.

    After a subsystem's horizon its arm joints hold the end command and its
    wheels stop; joints no subsystem drives hold still throughout.
    """

    spec: RobotSpec
    parts: tuple[tuple[np.ndarray, PolynomialCapabilityFunction], ...]
    dt: float

    def command(self, robot: RobotState, t: float) -> np.ndarray:
        wheels = self.spec.wheel_mask
        command = np.where(wheels, 0.0, robot.actuator.q)
        for joints, fn in self.parts:
            if t <= fn.horizon * (1.0 + 1e-9):
                command[joints] = fn.command(t)
            else:
                command[joints] = np.where(wheels[joints], 0.0, fn.command(fn.horizon))
        return command

    def __call__(self, robot: RobotState, t: float) -> Action:
        return Action(KinematicAction(self.command(robot, t), self.dt))


def common_sim(sims: Sequence[SimConfig]) -> SimConfig:
    """Shared step, longest horizon."""
    steps = {s.dt for s in sims}
    if len(steps) != 1:
        raise DimensionMismatch(f"subsystems use different time steps {sorted(steps)}")
    return SimConfig(dt=sims[0].dt, horizon=max(s.horizon for s in sims))


def execute_parallel(
    tasks: Sequence[ParallelTask], spec: RobotSpec, sim: SimConfig | None = None
) -> ParallelResult:
    """Sample every subsystem core on its own, merge by joint name, simulate once."""
    space = combined_space(spec, [task.store.space for task in tasks])
    sim = sim or common_sim([task.store.sim for task in tasks])
    samples = [sample_core(t.core, t.targets, t.store, t.spec) for t in tasks]
    theta = np.zeros(space.dim)
    parts = []
    for task, sample in zip(tasks, samples):
        sub = task.store.space
        if not np.isclose(task.store.sim.dt, sim.dt, rtol=0.0, atol=1e-12):
            raise DimensionMismatch(f"core {task.core.id} was explored with dt {task.store.sim.dt}, run uses {sim.dt}")
        theta += space.embed(sample.theta, sub)
        joints = np.array([spec.joint_index(name) for name in sub.joint_names])
        parts.append((joints, PolynomialCapabilityFunction(sub.coefficient_matrix(sample.theta), task.store.sim.horizon, sim.dt)))
    cap_fn = MergedCapabilityFunction(spec, tuple(parts), sim.dt)
    capability = execute(spec, sim, cap_fn, initial_state_for(space, theta, spec), theta=theta)
    logger.info("parallel run of %s on %s", [t.core.id for t in tasks], spec.name)
    return ParallelResult(capability, theta, space, samples)
