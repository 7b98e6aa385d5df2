"""Top-down reasoning: from tasks and missions to cognitive cores and robots.

Labels live in a small ontology (a rooted DAG of subclass edges).  Primitive
tasks carry semantic annotations; compound tasks expand into primitive
sequences through decomposition methods.  A mission is solved by the first
decomposition whose every primitive is covered by the cores of one robot.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import networkx as nx
import yaml

from capcycle.cores import CognitiveCore, Constraint, ConstraintKind, SemanticAnnotation
from capcycle.errors import IoFailure, NoCapableRobot, NoMethod, OntologyCycle, UnknownTask, UnknownTerm

logger = logging.getLogger(__name__)

ROOT_TERM = "task"

DEFAULT_HIERARCHY: dict[str, tuple[str, ...]] = {
    "move": (ROOT_TERM,),
    "manipulate": (ROOT_TERM,),
    "perceive": (ROOT_TERM,),
    "reach": ("move",),
    "navigate": ("move",),
    "grasp": ("manipulate",),
    "pick": ("manipulate",),
    "release": ("manipulate",),
}

PRIMITIVES = ("grasp", "navigate", "perceive", "pick", "reach", "release")

DEFAULT_METHODS: dict[str, tuple[tuple[str, ...], ...]] = {
    "fetch": (("navigate", "reach", "grasp"),),
    "pick-and-place": (
        ("reach", "pick", "reach", "release"),
        ("navigate", "reach", "pick", "navigate", "release"),
    ),
}


def _read_yaml(path: str | Path) -> Any:
    try:
        return yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}", path=str(path)) from exc


def _write_yaml(doc: Any, path: str | Path) -> None:
    try:
        Path(path).write_text(yaml.safe_dump(doc, sort_keys=True), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}", path=str(path)) from exc


# ----------------------------------------------------------------- ontology

class Ontology:
    """Label hierarchy; edges run from parent to child."""

    def __init__(self, hierarchy: Mapping[str, Iterable[str]], root: str = ROOT_TERM) -> None:
        graph = nx.DiGraph()
        graph.add_node(root)
        for term, parents in hierarchy.items():
            graph.add_node(term)
            for parent in parents:
                graph.add_edge(parent, term)
        if not nx.is_directed_acyclic_graph(graph):
            cycle = [u for u, _ in nx.find_cycle(graph)]
            raise OntologyCycle(f"subclass edges form a cycle through {cycle}", terms=cycle)
        orphans = sorted(set(graph) - nx.descendants(graph, root) - {root})
        if orphans:
            raise UnknownTerm(f"terms do not reach the root {root!r}: {orphans}", terms=orphans)
        self.root = root
        self._graph = graph

    @classmethod
    def default(cls) -> "Ontology":
        return cls(DEFAULT_HIERARCHY)

    def __contains__(self, term: object) -> bool:
        return term in self._graph

    @property
    def terms(self) -> list[str]:
        return sorted(self._graph)

    def parents(self, term: str) -> list[str]:
        self._require(term)
        return sorted(self._graph.predecessors(term))

    def subsumes(self, general: str, specific: str) -> bool:
        self._require(general)
        self._require(specific)
        return general == specific or nx.has_path(self._graph, general, specific)

    def with_subclass(self, term: str, parent: str) -> "Ontology":
        """Copy with ``term`` declared a subclass of ``parent``; new terms are registered."""
        self._require(parent)
        if term in self._graph and nx.has_path(self._graph, term, parent):
            raise OntologyCycle(f"{parent} already specializes {term}", term=term, parent=parent)
        return Ontology(self._hierarchy() | {term: (*self._hierarchy().get(term, ()), parent)}, self.root)

    def to_dict(self) -> dict[str, Any]:
        return {"root": self.root, "terms": {t: list(p) for t, p in self._hierarchy().items()}}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Ontology":
        return cls({t: tuple(p or ()) for t, p in (data.get("terms") or {}).items()}, data.get("root", ROOT_TERM))

    def save(self, path: str | Path) -> None:
        _write_yaml(self.to_dict(), path)

    @classmethod
    def load(cls, path: str | Path) -> "Ontology":
        return cls.from_dict(_read_yaml(path) or {})

    def _hierarchy(self) -> dict[str, tuple[str, ...]]:
        return {t: tuple(sorted(self._graph.predecessors(t))) for t in sorted(self._graph) if t != self.root}

    def _require(self, term: str) -> None:
        if term not in self._graph:
            raise UnknownTerm(f"{term!r} is not an ontology term", term=term)


def subsumes(ontology: Ontology, general: str, specific: str) -> bool:
    return ontology.subsumes(general, specific)


# --------------------------------------------------------------- vocabulary

@dataclass(frozen=True)
class AnnotatedTask:
    name: str
    annotation: SemanticAnnotation

    @classmethod
    def from_labels(cls, labels: Sequence[str], constraints: Sequence[Constraint] = ()) -> "AnnotatedTask":
        return cls("+".join(labels), SemanticAnnotation(tuple(labels), tuple(constraints)))


@dataclass
class PlanningVocabulary:
    primitives: dict[str, SemanticAnnotation]
    methods: dict[str, tuple[tuple[str, ...], ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        both = sorted(set(self.primitives) & set(self.methods))
        if both:
            raise UnknownTask(f"tasks declared both primitive and compound: {both}", tasks=both)
        for compound, methods in self.methods.items():
            if not methods:
                raise NoMethod(f"compound task {compound!r} has no decomposition method", task=compound)
            for step in itertools.chain.from_iterable(methods):
                if step not in self:
                    raise UnknownTask(f"method of {compound!r} uses unknown task {step!r}", task=step)

    @classmethod
    def default(cls) -> "PlanningVocabulary":
        return cls({name: SemanticAnnotation((name,)) for name in PRIMITIVES}, dict(DEFAULT_METHODS))

    def __contains__(self, name: object) -> bool:
        return name in self.primitives or name in self.methods

    @property
    def compounds(self) -> list[str]:
        return sorted(self.methods)

    def task(self, name: str) -> AnnotatedTask:
        if name not in self.primitives:
            raise UnknownTask(f"{name!r} is not a primitive task", task=name)
        return AnnotatedTask(name, self.primitives[name])

    def to_dict(self) -> dict[str, Any]:
        return {
            "primitives": {name: sa.to_dict() for name, sa in sorted(self.primitives.items())},
            "compounds": {name: [list(m) for m in methods] for name, methods in sorted(self.methods.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PlanningVocabulary":
        primitives = {
            name: SemanticAnnotation.from_dict(sa or {"labels": [name]})
            for name, sa in (data.get("primitives") or {}).items()
        }
        methods = {name: tuple(tuple(m) for m in ms) for name, ms in (data.get("compounds") or {}).items()}
        return cls(primitives, methods)

    def save(self, path: str | Path) -> None:
        _write_yaml(self.to_dict(), path)

    @classmethod
    def load(cls, path: str | Path) -> "PlanningVocabulary":
        return cls.from_dict(_read_yaml(path) or {})


@dataclass(frozen=True)
class Mission:
    tasks: tuple[str, ...]

    @classmethod
    def load(cls, path: str | Path) -> "Mission":
        doc = _read_yaml(path)
        tasks = doc.get("mission", []) if isinstance(doc, dict) else doc
        return cls(tuple(str(t) for t in tasks or ()))

    def save(self, path: str | Path) -> None:
        _write_yaml({"mission": list(self.tasks)}, path)


@dataclass
class Solution:
    robot: str
    decomposition: tuple[str, ...]
    assignment: list[tuple[str, str]]
    candidates: dict[str, list[str]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "robot": self.robot,
            "decomposition": list(self.decomposition),
            "assignment": [{"task": task, "core": core} for task, core in self.assignment],
            "candidates": self.candidates,
        }


# ----------------------------------------------------------------- matching

def _intervals_intersect(a: Constraint, b: Constraint) -> bool:
    return max(a.lo, b.lo) < min(a.hi, b.hi)  # type: ignore[type-var]


def _label_matches(task_label: str, core_label: str, ontology: Ontology, exact: bool) -> bool:
    if exact or core_label not in ontology:
        return task_label == core_label
    return ontology.subsumes(task_label, core_label)


def core_matches(task: AnnotatedTask, core: CognitiveCore, ontology: Ontology, exact: bool = False) -> bool:
    wanted = task.annotation
    if not all(any(_label_matches(t, c, ontology, exact) for c in core.labels) for t in wanted.labels):
        return False
    for constraint in wanted.constraints:
        offered = core.annotation.constraint(constraint.space)
        if (
            constraint.kind is ConstraintKind.MINMAX
            and offered is not None
            and offered.kind is ConstraintKind.MINMAX
            and not _intervals_intersect(constraint, offered)
        ):
            return False
    return True


def match_cores(
    task: AnnotatedTask,
    cores: Iterable[CognitiveCore],
    ontology: Ontology,
    exact: bool = False,
) -> list[CognitiveCore]:
    """Cores whose annotation covers the task's, ordered by robot then core id."""
    for label in task.annotation.labels:
        if not exact and label not in ontology:
            raise UnknownTerm(f"task label {label!r} is not an ontology term", term=label)
    found = [core for core in cores if core_matches(task, core, ontology, exact)]
    return sorted(found, key=lambda c: (c.robot, c.id))


def solve_task(
    labels: Sequence[str],
    cores: Iterable[CognitiveCore],
    ontology: Ontology,
    constraints: Sequence[Constraint] = (),
    exact: bool = False,
) -> dict[str, list[CognitiveCore]]:
    """Matching cores for an ad-hoc labelled task, grouped by robot."""
    grouped: dict[str, list[CognitiveCore]] = {}
    for core in match_cores(AnnotatedTask.from_labels(labels, constraints), cores, ontology, exact):
        grouped.setdefault(core.robot, []).append(core)
    return grouped


# ------------------------------------------------------------ decomposition

def decompose(vocabulary: PlanningVocabulary, mission: Sequence[str] | Mission) -> list[tuple[str, ...]]:
    """Every primitive sequence the mission expands to, methods tried in declaration order."""
    tasks = mission.tasks if isinstance(mission, Mission) else tuple(mission)

    def expand(name: str, stack: tuple[str, ...]) -> list[tuple[str, ...]]:
        if name not in vocabulary:
            raise UnknownTask(f"{name!r} is not in the planning vocabulary", task=name)
        if name in vocabulary.primitives:
            return [(name,)]
        if name in stack:
            return []
        sequences = []
        for method in vocabulary.methods[name]:
            parts = [expand(step, stack + (name,)) for step in method]
            sequences += [tuple(itertools.chain.from_iterable(combo)) for combo in itertools.product(*parts)]
        if not sequences and not stack:
            raise NoMethod(f"no method of {name!r} terminates in primitive tasks", task=name)
        return sequences

    per_task = [expand(name, ()) for name in tasks]
    return [tuple(itertools.chain.from_iterable(combo)) for combo in itertools.product(*per_task)]


def solve_mission(
    mission: Sequence[str] | Mission,
    vocabulary: PlanningVocabulary,
    cores: Iterable[CognitiveCore],
    ontology: Ontology,
    exact: bool = False,
) -> Solution:
    """First decomposition covered by one robot; robots are tried in id order."""
    tasks = mission.tasks if isinstance(mission, Mission) else tuple(mission)
    if not tasks:
        raise UnknownTask("mission has no tasks")
    cores = list(cores)
    robots = sorted({core.robot for core in cores})
    decompositions = decompose(vocabulary, tasks)

    uncovered: dict[str, set[str]] = {robot: set() for robot in robots}
    for sequence in decompositions:
        matches = {p: match_cores(vocabulary.task(p), cores, ontology, exact) for p in dict.fromkeys(sequence)}
        for robot in robots:
            mine = {p: [c.id for c in found if c.robot == robot] for p, found in matches.items()}
            missing = sorted(p for p, ids in mine.items() if not ids)
            if not missing:
                solution = Solution(robot, sequence, [(p, mine[p][0]) for p in sequence], mine)
                logger.info("mission %s solved by %s via %s", list(tasks), robot, list(sequence))
                return solution
            uncovered[robot].update(missing)

    nobody = sorted(set.intersection(*uncovered.values())) if robots else sorted(
        set(itertools.chain.from_iterable(decompositions))
    )
    raise NoCapableRobot(
        f"no single robot covers the mission; uncovered: {', '.join(nobody) or 'per-robot gaps'}",
        uncovered=nobody,
        per_robot={robot: sorted(missing) for robot, missing in uncovered.items()},
    )
