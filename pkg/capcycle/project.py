"""File-based project store.

    <root>/
      graph.jsonl                 component graph
      sets/<robot>/               capability sets
      validators/<robot>.json     validation networks
      clusters/<robot>/           cluster stores
      cores/<core>.v<n>.json      cognitive core versions
      samples/                    core samples and plot-data tables
      reports/                    report tables and summary
      behavior_models.yaml, ontology.yaml, vocabulary.yaml
      manifests.jsonl             one record per command run

Artifacts carry no timestamps; run times live only in the manifests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from capcycle import graphstore
from capcycle.cluster import ClusterStore
from capcycle.cores import DEFAULT_BEHAVIOR_MODELS, BehaviorModel, CognitiveCore, list_cores, load_behavior_models, load_core
from capcycle.errors import IoFailure, ProjectLocked, UnknownArtifact
from capcycle.explore import CapabilitySet, ValidationModel
from capcycle.graphstore import Domain, EntityKind, PropertyGraph
from capcycle.reason import Ontology, PlanningVocabulary
from capcycle.simkin import RobotSpec, robot_from_assembly

logger = logging.getLogger(__name__)

LOCK_NAME = ".capcycle.lock"


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Project:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    @property
    def graph_path(self) -> Path:
        return self.root / "graph.jsonl"

    @property
    def cores_dir(self) -> Path:
        return self.root / "cores"

    @property
    def samples_dir(self) -> Path:
        return self.root / "samples"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifests.jsonl"

    def set_dir(self, robot: str) -> Path:
        return self.root / "sets" / robot

    def validator_path(self, robot: str) -> Path:
        return self.root / "validators" / f"{robot}.json"

    def clusters_dir(self, robot: str) -> Path:
        return self.root / "clusters" / robot

    def document(self, name: str) -> Path:
        return self.root / f"{name}.yaml"

    # ------------------------------------------------------------ locking

    @contextmanager
    def lock(self) -> Iterator["Project"]:
        """One command per project at a time."""
        path = self.root / LOCK_NAME
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ProjectLocked(f"project {self.root} is locked by another command", path=str(path)) from None
        except OSError as exc:
            raise IoFailure(f"cannot lock project {self.root}: {exc}", path=str(path)) from exc
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield self
        finally:
            path.unlink(missing_ok=True)

    # ---------------------------------------------------------- artifacts

    def load_graph(self) -> PropertyGraph:
        if not self.graph_path.exists():
            return PropertyGraph()
        return graphstore.load(self.graph_path)

    def save_graph(self, graph: PropertyGraph) -> Path:
        graphstore.save(graph, self.graph_path)
        return self.graph_path

    def robot_spec(self, robot: str, graph: PropertyGraph | None = None) -> RobotSpec:
        graph = graph or self.load_graph()
        assembly = graph.find_model(EntityKind.COMPONENT_MODEL, Domain.ASSEMBLY, robot)
        if assembly is None:
            raise UnknownArtifact(f"no assembled robot named {robot!r}", robot=robot)
        return robot_from_assembly(graph, assembly)

    def capabilities(self, robot: str) -> CapabilitySet:
        self._require(self.set_dir(robot) / "manifest.json", "capability set", robot)
        return CapabilitySet.load(self.set_dir(robot))

    def validator(self, robot: str) -> ValidationModel:
        self._require(self.validator_path(robot), "validator", robot)
        return ValidationModel.load(self.validator_path(robot))

    def clusters(self, robot: str) -> ClusterStore:
        self._require(self.clusters_dir(robot) / "store.json", "cluster store", robot)
        return ClusterStore.load(self.clusters_dir(robot))

    def core(self, core_id: str, version: int | None = None) -> CognitiveCore:
        return load_core(self.cores_dir, core_id, version)

    def cores(self) -> list[CognitiveCore]:
        return list_cores(self.cores_dir)

    def behavior_models(self) -> dict[str, BehaviorModel]:
        models = {m.label: m for m in DEFAULT_BEHAVIOR_MODELS}
        if self.document("behavior_models").exists():
            models.update(load_behavior_models(self.document("behavior_models")))
        return models

    def behavior_model(self, label: str) -> BehaviorModel:
        models = self.behavior_models()
        if label not in models:
            raise UnknownArtifact(f"no behavior model {label!r}", behavior=label, known=sorted(models))
        return models[label]

    def ontology(self) -> Ontology:
        path = self.document("ontology")
        return Ontology.load(path) if path.exists() else Ontology.default()

    def vocabulary(self) -> PlanningVocabulary:
        path = self.document("vocabulary")
        return PlanningVocabulary.load(path) if path.exists() else PlanningVocabulary.default()

    @staticmethod
    def _require(path: Path, what: str, robot: str) -> None:
        if not path.exists():
            raise UnknownArtifact(f"no {what} for robot {robot!r}", robot=robot, path=str(path))

    # ---------------------------------------------------------- manifests

    def hashes(self, paths: Iterable[Path]) -> dict[str, str]:
        """SHA-256 of every file under ``paths``, keyed by project-relative path."""
        found: dict[str, str] = {}
        for path in paths:
            files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
            for file in files:
                if file.exists():
                    key = file.relative_to(self.root) if file.is_relative_to(self.root) else file.resolve()
                    found[key.as_posix()] = sha256_file(file)
        return dict(sorted(found.items()))

    def record(
        self,
        command: str,
        started: datetime,
        config: dict[str, Any] | None = None,
        config_hash: str | None = None,
        seed: int | None = None,
        inputs: Iterable[Path] = (),
        outputs: Iterable[Path] = (),
    ) -> dict[str, Any]:
        entry = {
            "command": command,
            "config": config,
            "config_sha256": config_hash,
            "seed": seed,
            "started": started.isoformat(),
            "finished": now().isoformat(),
            "inputs": self.hashes(inputs),
            "outputs": self.hashes(outputs),
        }
        try:
            with self.manifest_path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(entry, sort_keys=True) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot append manifest: {exc}", path=str(self.manifest_path)) from exc
        logger.info("%s: %d outputs recorded", command, len(entry["outputs"]))
        return entry

    def manifests(self) -> list[dict[str, Any]]:
        if not self.manifest_path.exists():
            return []
        return [json.loads(line) for line in self.manifest_path.read_text(encoding="utf-8").splitlines() if line]


def now() -> datetime:
    return datetime.now(timezone.utc)
