"""Development-cycle steps over a project.

Each step reads its inputs from the project, writes its artifacts and returns
the paths it wrote, so the command line can record a manifest per command.
``DevelopmentCycle`` chains the bottom-up steps: assemble, explore, validate,
cluster, ground behavior models.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from capcycle.cluster import ClusterStore, cluster, feature_directness, feature_space_accuracy
from capcycle.config import ClusterConfig, ExplorationConfig, SamplerConfig, ValidatorConfig
from capcycle.cores import (
    CognitiveCore,
    CoreSample,
    ParallelResult,
    ParallelTask,
    annotate_core,
    create_core,
    execute_parallel,
    sample_core,
    save_core,
)
from capcycle.errors import CapCycleError, IoFailure, NoFeasibleSample, UnknownArtifact
from capcycle.explore import CapabilitySet, ValidationModel, evaluate_validator, explore, train_validator
from capcycle.fixtures import FIXTURES
from capcycle.graphstore import PropertyGraph
from capcycle.project import Project
from capcycle.simkin import compose_base_pose, export_capability_table

logger = logging.getLogger(__name__)

Targets = Mapping[str, Sequence[float]]


def _write_json(doc: Any, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}", path=str(path)) from exc
    return path


def _write_table(path: Path, columns: Sequence[str], rows: np.ndarray) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.atleast_2d(rows), delimiter="\t", header="\t".join(columns), comments="", fmt="%.17g")
    except OSError as exc:
        raise IoFailure(f"cannot write table {path}: {exc}", path=str(path)) from exc
    return path


# ------------------------------------------------------- bottom-up steps

def assemble(project: Project, fixture: str, robot: str) -> list[Path]:
    if fixture not in FIXTURES:
        raise UnknownArtifact(f"unknown fixture {fixture!r}", fixture=fixture, known=sorted(FIXTURES))
    graph = project.load_graph()
    FIXTURES[fixture](graph, robot)
    return [project.save_graph(graph)]


def explore_robot(project: Project, robot: str, config: ExplorationConfig) -> tuple[CapabilitySet, list[Path]]:
    capset = explore(project.robot_spec(robot), config)
    return capset, capset.save(project.set_dir(robot))


def train_robot_validator(
    project: Project, robot: str, config: ValidatorConfig
) -> tuple[ValidationModel, dict[str, float], list[Path]]:
    capset = project.capabilities(robot)
    model = train_validator(capset, config)
    path = project.validator_path(robot)
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    return model, evaluate_validator(model, capset), [path]


def cluster_robot(
    project: Project, robot: str, config: ClusterConfig, accuracy: bool = False
) -> tuple[ClusterStore, dict[str, float], list[Path]]:
    spec = project.robot_spec(robot)
    store = cluster(project.capabilities(robot), spec, config)
    paths = store.save(project.clusters_dir(robot))
    scores: dict[str, float] = {}
    if accuracy:
        scores = {
            space: feature_space_accuracy(store, space, spec, config.accuracy_draws, config.seed)
            for space in config.spaces
        }
        paths.append(_write_json(scores, project.clusters_dir(robot) / "accuracy.json"))
    return store, scores, paths


def create_robot_core(
    project: Project, robot: str, behavior: str, sampler: SamplerConfig | None = None
) -> tuple[CognitiveCore, list[Path]]:
    """Ground a behavior model; an identical existing core is reused, a changed one gets a new version."""
    core = create_core(robot, project.behavior_model(behavior), project.clusters(robot), sampler)
    try:
        latest = project.core(core.id)
    except UnknownArtifact:
        return core, [save_core(core, project.cores_dir)]
    if {**latest.to_dict(), "version": 1} == core.to_dict():
        return latest, []
    core = CognitiveCore.from_dict({**core.to_dict(), "version": latest.version + 1})
    return core, [save_core(core, project.cores_dir)]


# -------------------------------------------------------------- execution

def sample_robot_core(
    project: Project,
    core_id: str,
    targets: Targets,
    sampler: SamplerConfig | None = None,
    plot_out: Path | None = None,
) -> tuple[CoreSample, list[Path]]:
    core = project.core(core_id)
    sampler = sampler or core.sampler
    sample = sample_core(core, targets, project.clusters(core.robot), project.robot_spec(core.robot), sampler)
    stem = f"{core.id}.v{core.version}.s{sampler.seed}"
    record = _write_json(sample.to_dict(), project.samples_dir / f"{stem}.json")
    table = plot_out or project.samples_dir / f"{stem}.tsv"
    table.parent.mkdir(parents=True, exist_ok=True)
    export_capability_table(sample.capability, table)
    return sample, [record, table]


def annotate_robot_core(
    project: Project,
    core_id: str,
    add: Sequence[str] = (),
    remove: Sequence[str] = (),
    strict: bool = False,
) -> tuple[CognitiveCore, list[Path]]:
    core = project.core(core_id)
    updated = annotate_core(core, add, remove, project.ontology(), strict)
    if updated is core:
        return core, []
    return updated, [save_core(updated, project.cores_dir)]


@dataclass
class PartPlan:
    """One subsystem core and its targets inside a parallel run."""

    core: str
    targets: dict[str, list[float]] = field(default_factory=dict)


def run_parallel(project: Project, robot: str, parts: Sequence[PartPlan]) -> tuple[ParallelResult, dict[str, Any], list[Path]]:
    graph = project.load_graph()
    spec = project.robot_spec(robot, graph)
    tasks = []
    for part in parts:
        core = project.core(part.core)
        tasks.append(ParallelTask(core, part.targets, project.clusters(core.robot), project.robot_spec(core.robot, graph)))
    result = execute_parallel(tasks, spec)

    summary: dict[str, Any] = {"robot": robot, "cores": [t.core.id for t in tasks]}
    mount = spec.base.mount_height if spec.base is not None else 0.0
    for task, sample in zip(tasks, result.samples):
        if task.spec.base is None and spec.base is not None:
            # the subsystem run covers the first len(sample) steps of the combined one
            steps = len(sample.capability)
            composed = np.array([
                compose_base_pose(pose, point, mount)
                for pose, point in zip(result.capability.base[:steps], sample.capability.ee)
            ])
            error = float(np.max(np.abs(composed - result.capability.ee[:steps])))
            summary[f"superposition_error:{task.core.id}"] = error
    summary["end_effector"] = result.capability.ee[-1].tolist()
    summary["base_pose"] = result.capability.base[-1].tolist()

    out = project.reports_dir / f"parallel-{robot}.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    export_capability_table(result.capability, out)
    return result, summary, [out, _write_json(summary, out.with_suffix(".json"))]


# ----------------------------------------------------------------- report

def reach_report(
    project: Project,
    robot: str,
    targets: Targets,
    samples: int = 20,
    seed: int = 0,
    behaviors: Sequence[str] = ("reach", "reach-unconstrained"),
    parallel: tuple[str, Sequence[PartPlan]] | None = None,
) -> tuple[dict[str, Any], list[Path]]:
    """Seeded samples per core: end-effector paths, target distances and directness."""
    spec = project.robot_spec(robot)
    store = project.clusters(robot)
    end = np.asarray(targets["end"], dtype=float) if "end" in targets else None
    paths = [_write_table(
        project.reports_dir / "targets.tsv", ["x", "y", "z"], end[None] if end is not None else np.zeros((0, 3))
    )]
    summary: dict[str, Any] = {"robot": robot, "reach_m": spec.reach, "cores": {}}

    for behavior in behaviors:
        core = project.core(f"{robot}-{behavior}")
        distances, directness, rejected, rows = [], [], 0, []
        for i in range(samples):
            sampler = core.sampler.model_copy(update={"seed": seed + i})
            try:
                sample = sample_core(core, targets, store, spec, sampler)
            except NoFeasibleSample:
                rejected += 1
                continue
            cap = sample.capability
            rows.append(np.column_stack([np.full(len(cap), i), cap.t, cap.ee]))
            directness.append(feature_directness(cap))
            if end is not None:
                distances.append(float(np.linalg.norm(cap.ee[-1] - end)))
        table = np.vstack(rows) if rows else np.zeros((0, 5))
        paths.append(_write_table(project.reports_dir / f"{core.id}.paths.tsv", ["sample", "t", "x", "y", "z"], table))
        summary["cores"][core.id] = {
            "samples": samples - rejected,
            "rejected": rejected,
            "median_target_distance": float(np.median(distances)) if distances else None,
            "median_directness": float(np.median(directness)) if directness else None,
        }
        logger.info("report %s: %d samples, %d rejected", core.id, samples - rejected, rejected)

    if parallel is not None:
        combined, parts = parallel
        _, summary["parallel"], written = run_parallel(project, combined, parts)
        paths += written
    paths.append(_write_json(summary, project.reports_dir / "summary.json"))
    return summary, paths


# ------------------------------------------------------------------ cycle

class DevelopmentCycle:
    """Bottom-up pipeline from a fixture to grounded cognitive cores."""

    def __init__(
        self,
        project: Project,
        fixture: str,
        robot: str,
        exploration: ExplorationConfig,
        validator: ValidatorConfig,
        clustering: ClusterConfig,
        sampler: SamplerConfig,
        behaviors: Sequence[str] = ("reach", "reach-unconstrained"),
    ) -> None:
        self.project = project
        self.fixture = fixture
        self.robot = robot
        self.exploration = exploration
        self.validator = validator
        self.clustering = clustering
        self.sampler = sampler
        self.behaviors = tuple(behaviors)
        self.outputs: list[Path] = []
        self.results: dict[str, Any] = {"robot": robot, "fixture": fixture, "cores": {}, "notes": []}

    def run(self) -> dict[str, Any]:
        logger.info("development cycle for %s", self.robot)

        # 1. Assembly (an existing robot of that name is reused)
        self._assemble()

        # 2. Exploration
        capset, paths = explore_robot(self.project, self.robot, self.exploration)
        self.outputs += paths
        self.results["capabilities"] = len(capset)
        self.results["feasible_fraction"] = float(np.mean(capset.feasible))

        # 3. Validation model
        self._train_validator()

        # 4. Clustering
        store, _, paths = cluster_robot(self.project, self.robot, self.clustering)
        self.outputs += paths
        self.results["clusters"] = {space: c.k for space, c in sorted(store.spaces.items())}

        # 5. Cognitive cores
        for behavior in self.behaviors:
            self._ground(behavior)

        self._notes()
        self.outputs.append(_write_json(self.results, self.project.reports_dir / f"cycle-{self.robot}.json"))
        return self.results

    def _assemble(self) -> None:
        graph = self.project.load_graph()
        if self._assembled(graph):
            return
        self.outputs += assemble(self.project, self.fixture, self.robot)

    def _assembled(self, graph: PropertyGraph) -> bool:
        try:
            self.project.robot_spec(self.robot, graph)
        except UnknownArtifact:
            return False
        return True

    def _train_validator(self) -> None:
        try:
            _, metrics, paths = train_robot_validator(self.project, self.robot, self.validator)
        except CapCycleError as exc:
            # a single feasibility class leaves nothing to learn
            self.results["validator"] = exc.to_record()
            return
        self.outputs += paths
        self.results["validator"] = metrics

    def _ground(self, behavior: str) -> None:
        try:
            core, paths = create_robot_core(self.project, self.robot, behavior, self.sampler)
        except CapCycleError as exc:
            self.results["cores"][behavior] = exc.to_record()
            return
        self.outputs += paths
        self.results["cores"][behavior] = {"id": core.id, "version": core.version, "linked": {
            space: list(ids) for space, ids in core.linked.items()
        }}

    def _notes(self) -> None:
        notes = self.results["notes"]
        fraction = self.results["feasible_fraction"]
        if fraction in (0.0, 1.0):
            notes.append("All explored capabilities fall in one feasibility class; widen the parameter bounds.")
        failed = [b for b, entry in self.results["cores"].items() if "code" in entry]
        if failed:
            notes.append(f"Behavior models without a core: {', '.join(failed)}.")
        if not notes:
            notes.append("Every behavior model was grounded.")
