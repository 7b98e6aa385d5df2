"""Typed property graph for robot composition.

Vertices are component models, components, interface models and interfaces;
edges are one of eight relation kinds, each with a declared cardinality that is
checked on every mutation.  Mutations validate first and commit second, so a
failing operator leaves the graph untouched.

Thread safety:
    Single writer, many readers.  Every mutating operator holds an internal
    re-entrant lock; ``batch()`` groups several operators into one unit that is
    rolled back as a whole on error.
"""

from __future__ import annotations

import json
import logging
import threading
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import networkx as nx

from capcycle.errors import (
    CapCycleError,
    CardinalityViolation,
    DomainMismatch,
    DuplicateName,
    EmptyName,
    IncompatibleInterfaces,
    IoFailure,
    KindMismatch,
    SchemaViolation,
    UnknownEntity,
    UnknownInterface,
    UnknownModel,
)

logger = logging.getLogger(__name__)

FORMAT_NAME = "capcycle-graph"
FORMAT_VERSION = 1
RESERVED_KEYS = frozenset({"label"})


class Domain(str, Enum):
    SOFTWARE = "Software"
    COMPUTATIONAL = "Computational"
    MECHANICS = "Mechanics"
    ELECTRONICS = "Electronics"
    ASSEMBLY = "Assembly"


class EntityKind(str, Enum):
    COMPONENT_MODEL = "ComponentModel"
    COMPONENT = "Component"
    INTERFACE_MODEL = "InterfaceModel"
    INTERFACE = "Interface"


@dataclass(frozen=True)
class Signature:
    source: EntityKind
    target: EntityKind
    cardinality: str
    max_out: int | None
    max_in: int | None


class RelationKind(str, Enum):
    INSTANCE_OF_COMPONENT_MODEL = "InstanceOfComponentModel"
    INSTANCE_OF_INTERFACE_MODEL = "InstanceOfInterfaceModel"
    SUBCLASS_OF = "SubclassOf"
    MODEL_HAS_INTERFACE = "ModelHasInterface"
    COMPONENT_HAS_INTERFACE = "ComponentHasInterface"
    PART_OF_COMPOSITION = "PartOfComposition"
    CONNECTED_TO = "ConnectedTo"
    ALIAS_OF = "AliasOf"

    @property
    def signature(self) -> Signature:
        return _SIGNATURES[self]


_CM, _C, _IM, _I = (
    EntityKind.COMPONENT_MODEL,
    EntityKind.COMPONENT,
    EntityKind.INTERFACE_MODEL,
    EntityKind.INTERFACE,
)

# N:1 bounds the out-degree of a source, 1:N the in-degree of a target.
_SIGNATURES = {
    RelationKind.INSTANCE_OF_COMPONENT_MODEL: Signature(_C, _CM, "N:1", 1, None),
    RelationKind.INSTANCE_OF_INTERFACE_MODEL: Signature(_I, _IM, "N:1", 1, None),
    RelationKind.SUBCLASS_OF: Signature(_CM, _CM, "N:1", 1, None),
    RelationKind.MODEL_HAS_INTERFACE: Signature(_CM, _I, "1:N", None, 1),
    RelationKind.COMPONENT_HAS_INTERFACE: Signature(_C, _I, "1:N", None, 1),
    RelationKind.PART_OF_COMPOSITION: Signature(_C, _CM, "N:1", 1, None),
    RelationKind.CONNECTED_TO: Signature(_I, _I, "M:N", None, None),
    RelationKind.ALIAS_OF: Signature(_I, _I, "1:1", 1, 1),
}

_OWNERSHIP = (RelationKind.MODEL_HAS_INTERFACE, RelationKind.COMPONENT_HAS_INTERFACE)
_DOMAIN_VALUES = frozenset(d.value for d in Domain)
_HEADER_KEYS = frozenset({"format", "version", "prefix", "next_id"})
_RECORD_KEYS = {
    "vertex": frozenset({"record", "id", "kind", "properties"}),
    "edge": frozenset({"record", "id", "kind", "source", "target", "properties"}),
    "compatible": frozenset({"record", "models"}),
}
_RECORD_ORDER = {"vertex": 0, "edge": 1, "compatible": 2}


@dataclass(frozen=True)
class Vertex:
    id: str
    kind: EntityKind
    properties: dict[str, str] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.properties.get("label", "")

    @property
    def domain(self) -> Domain | None:
        value = self.properties.get("domain")
        return Domain(value) if value else None


@dataclass(frozen=True)
class Edge:
    id: str
    kind: RelationKind
    source: str
    target: str
    properties: dict[str, str] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.properties.get("label", "")


class PropertyGraph:
    """Component graph with Table-style operators and cardinality checks."""

    def __init__(self, prefix: str = "g") -> None:
        if not prefix:
            raise EmptyName("graph id prefix must not be empty")
        self.prefix = prefix
        self._g = nx.MultiDiGraph()
        self._edge_index: dict[str, tuple[str, str]] = {}
        self._compatible: set[frozenset[str]] = set()
        self._next_id = 1
        self._lock = threading.RLock()

    # ------------------------------------------------------------------ reads

    def __contains__(self, vertex_id: object) -> bool:
        return vertex_id in self._g

    def vertex(self, vertex_id: str) -> Vertex:
        if vertex_id not in self._g:
            raise UnknownEntity(f"unknown vertex {vertex_id!r}", id=vertex_id)
        data = self._g.nodes[vertex_id]
        return Vertex(vertex_id, data["kind"], dict(data["props"]))

    def edge(self, edge_id: str) -> Edge:
        if edge_id not in self._edge_index:
            raise UnknownEntity(f"unknown edge {edge_id!r}", id=edge_id)
        u, v = self._edge_index[edge_id]
        data = self._g.edges[u, v, edge_id]
        return Edge(edge_id, data["kind"], u, v, dict(data["props"]))

    def vertices(self, kind: EntityKind | None = None) -> list[Vertex]:
        ids = sorted(self._g.nodes)
        out = [self.vertex(i) for i in ids]
        return [v for v in out if kind is None or v.kind is kind]

    def edges(self, kind: RelationKind | None = None) -> list[Edge]:
        out = [self.edge(e) for e in sorted(self._edge_index)]
        return [e for e in out if kind is None or e.kind is kind]

    @property
    def vocabulary(self) -> set[str]:
        """Every label in use, the graph's alphabet."""
        labels = {d["props"]["label"] for _, d in self._g.nodes(data=True)}
        labels |= {d["props"]["label"] for _, _, d in self._g.edges(data=True)}
        return labels

    def out_edges(self, vertex_id: str, kind: RelationKind) -> list[Edge]:
        found = [
            key for _, _, key, data in self._g.out_edges(vertex_id, keys=True, data=True)
            if data["kind"] is kind
        ]
        return [self.edge(k) for k in sorted(found)]

    def in_edges(self, vertex_id: str, kind: RelationKind) -> list[Edge]:
        found = [
            key for _, _, key, data in self._g.in_edges(vertex_id, keys=True, data=True)
            if data["kind"] is kind
        ]
        return [self.edge(k) for k in sorted(found)]

    def find_model(self, kind: EntityKind, domain: Domain, name: str) -> str | None:
        for v in self.vertices(kind):
            if v.label == name and v.domain is domain:
                return v.id
        return None

    def find_models(self, name: str, kind: EntityKind = EntityKind.COMPONENT_MODEL) -> list[str]:
        return [v.id for v in self.vertices(kind) if v.label == name]

    def model_of(self, vertex_id: str) -> str:
        """Model of a component or of an interface."""
        v = self.vertex(vertex_id)
        relation = {
            EntityKind.COMPONENT: RelationKind.INSTANCE_OF_COMPONENT_MODEL,
            EntityKind.INTERFACE: RelationKind.INSTANCE_OF_INTERFACE_MODEL,
        }.get(v.kind)
        if relation is None:
            raise KindMismatch(f"{vertex_id} is a {v.kind.value}, not an instance", id=vertex_id)
        edges = self.out_edges(vertex_id, relation)
        if not edges:
            raise SchemaViolation(f"{vertex_id} has no model", id=vertex_id)
        return edges[0].target

    def interfaces(self, owner: str) -> list[str]:
        """Interfaces exposed by a component model or component, in creation order."""
        v = self.vertex(owner)
        relation = (
            RelationKind.MODEL_HAS_INTERFACE
            if v.kind is EntityKind.COMPONENT_MODEL
            else RelationKind.COMPONENT_HAS_INTERFACE
        )
        return [e.target for e in self.out_edges(owner, relation)]

    def interface_of(self, owner: str, name: str) -> str:
        for iface in self.interfaces(owner):
            if self.vertex(iface).label == name:
                return iface
        raise UnknownInterface(f"{owner} has no interface {name!r}", owner=owner, name=name)

    def owner_of(self, interface: str) -> str | None:
        for relation in _OWNERSHIP:
            edges = self.in_edges(interface, relation)
            if edges:
                return edges[0].source
        return None

    def parts(self, model: str) -> list[str]:
        """Components composed into ``model``, in composition order."""
        self._require(model, EntityKind.COMPONENT_MODEL, UnknownModel)
        return [e.source for e in self.in_edges(model, RelationKind.PART_OF_COMPOSITION)]

    def connections_between(self, parts: Iterable[str]) -> list[tuple[str, str, str]]:
        """ConnectedTo edges whose interfaces are owned by two of ``parts``: (owner_a, owner_b, edge id)."""
        members = set(parts)
        found = []
        for edge in self.edges(RelationKind.CONNECTED_TO):
            a, b = self.owner_of(edge.source), self.owner_of(edge.target)
            if a in members and b in members:
                found.append((a, b, edge.id))
        return found

    def properties(self, vertex_id: str) -> dict[str, str]:
        """Merged properties: an instance inherits its model's, overriding them."""
        v = self.vertex(vertex_id)
        if v.kind is EntityKind.COMPONENT:
            merged = dict(self.vertex(self.model_of(vertex_id)).properties)
            merged.update(v.properties)
            return merged
        return dict(v.properties)

    def is_compatible(self, model_a: str, model_b: str) -> bool:
        return model_a == model_b or frozenset((model_a, model_b)) in self._compatible

    def resolve_parts(self, model: str, recursive: bool = False) -> list[tuple[str, str]]:
        """Chain instance-of inverse with part-of: (part model, instance name) pairs."""
        self._require(model, EntityKind.COMPONENT_MODEL, UnknownModel)
        result: list[tuple[str, str]] = []
        seen = {model}

        def walk(current: str) -> None:
            for component in self.parts(current):
                part_model = self.model_of(component)
                result.append((part_model, self.vertex(component).label))
                if recursive and part_model not in seen:
                    seen.add(part_model)
                    walk(part_model)

        walk(model)
        return result

    # -------------------------------------------------------------- operators

    def create_component_model(self, domain: Domain, name: str, **properties: Any) -> str:
        return self._create_model(EntityKind.COMPONENT_MODEL, domain, name, properties)

    def create_interface_model(self, domain: Domain, name: str, **properties: Any) -> str:
        return self._create_model(EntityKind.INTERFACE_MODEL, domain, name, properties)

    def instantiate_interface(self, model: str, name: str) -> str:
        with self._lock:
            self._require(model, EntityKind.INTERFACE_MODEL, UnknownModel)
            _require_name(name)
            iface = self._add_vertex(EntityKind.INTERFACE, {"label": name})
            self._add_edge(RelationKind.INSTANCE_OF_INTERFACE_MODEL, iface, model)
            return iface

    def instantiate_component(self, model: str, name: str, **properties: Any) -> str:
        """Create a component from a model, copying the model's interfaces onto it."""
        with self._lock:
            self._require(model, EntityKind.COMPONENT_MODEL, UnknownModel)
            _require_name(name)
            props = _clean_properties(properties)
            templates = [(self.vertex(i).label, self.model_of(i)) for i in self.interfaces(model)]
            component = self._add_vertex(EntityKind.COMPONENT, {**props, "label": name})
            self._add_edge(RelationKind.INSTANCE_OF_COMPONENT_MODEL, component, model)
            for iface_name, iface_model in templates:
                iface = self._add_vertex(EntityKind.INTERFACE, {"label": iface_name})
                self._add_edge(RelationKind.INSTANCE_OF_INTERFACE_MODEL, iface, iface_model)
                self._add_edge(RelationKind.COMPONENT_HAS_INTERFACE, component, iface)
            logger.debug("instantiated %s (%s) with %d interfaces", name, component, len(templates))
            return component

    def declare_compatible(self, model_a: str, model_b: str) -> None:
        with self._lock:
            self._require(model_a, EntityKind.INTERFACE_MODEL, UnknownModel)
            self._require(model_b, EntityKind.INTERFACE_MODEL, UnknownModel)
            self._rule_same_domain(model_a, model_b)
            # a model always fits itself
            if model_a != model_b:
                self._compatible.add(frozenset((model_a, model_b)))

    def connect(self, iface_a: str, iface_b: str) -> str:
        with self._lock:
            for iface in (iface_a, iface_b):
                if iface not in self._g or self.vertex(iface).kind is not EntityKind.INTERFACE:
                    raise UnknownInterface(f"{iface!r} is not an interface", id=iface)
            self._rule_connection(iface_a, iface_b)
            return self._checked_edge(RelationKind.CONNECTED_TO, iface_a, iface_b)

    def compose(self, component: str, model: str) -> str:
        with self._lock:
            self._require(component, EntityKind.COMPONENT, UnknownEntity)
            self._require(model, EntityKind.COMPONENT_MODEL, UnknownEntity)
            self._rule_composition(component, model)
            return self._checked_edge(RelationKind.PART_OF_COMPOSITION, component, model)

    def is_a(self, child: str, parent: str) -> str:
        with self._lock:
            self._require(child, EntityKind.COMPONENT_MODEL, UnknownEntity)
            self._require(parent, EntityKind.COMPONENT_MODEL, UnknownEntity)
            self._rule_acyclic_subclass(child, parent)
            return self._checked_edge(RelationKind.SUBCLASS_OF, child, parent)

    def has_interface_model(self, model: str, iface: str) -> str:
        with self._lock:
            return self._attach_interface(RelationKind.MODEL_HAS_INTERFACE, model, iface)

    def has_interface(self, component: str, iface: str) -> str:
        with self._lock:
            return self._attach_interface(RelationKind.COMPONENT_HAS_INTERFACE, component, iface)

    def export(self, inner: str, outer: str) -> str:
        with self._lock:
            return self._checked_edge(RelationKind.ALIAS_OF, inner, outer)

    def set_properties(self, vertex_id: str, **properties: Any) -> None:
        with self._lock:
            v = self.vertex(vertex_id)
            props = _clean_properties(properties)
            self._g.nodes[v.id]["props"] = {**v.properties, **props}

    @contextmanager
    def batch(self) -> Iterator["PropertyGraph"]:
        """Apply several operators atomically."""
        with self._lock:
            snapshot = (self._g.copy(), dict(self._edge_index), set(self._compatible), self._next_id)
            try:
                yield self
            except Exception:
                self._g, self._edge_index, self._compatible, self._next_id = snapshot
                raise

    # ------------------------------------------------------------- validation

    def validate(self) -> None:
        """Re-check every invariant the operators enforce; raises SchemaViolation on the first offender.

        Structure is checked first (labels, domains, endpoint kinds, cardinalities,
        instance models), then each operator rule is replayed over the stored edges.
        """
        models: set[tuple[str, str, str]] = set()
        for vid, data in sorted(self._g.nodes(data=True)):
            kind, props = data["kind"], data["props"]
            if not props.get("label"):
                raise SchemaViolation(f"vertex {vid} has an empty label", id=vid)
            if kind in (EntityKind.COMPONENT_MODEL, EntityKind.INTERFACE_MODEL):
                if props.get("domain") not in _DOMAIN_VALUES:
                    raise SchemaViolation(f"model {vid} has no valid domain", id=vid)
                key = (kind.value, props["domain"], props["label"])
                if key in models:
                    raise SchemaViolation(f"duplicate model name at {vid}", id=vid)
                models.add(key)
            elif "domain" in props:
                raise SchemaViolation(f"{kind.value} {vid} carries a domain", id=vid)
        for eid in sorted(self._edge_index):
            edge = self.edge(eid)
            if edge.properties != {"label": edge.kind.value}:
                raise SchemaViolation(f"edge {eid} must carry exactly the label {edge.kind.value}", id=eid)
            try:
                self._check_signature(edge.kind, edge.source, edge.target)
            except (KindMismatch, UnknownEntity) as exc:
                raise SchemaViolation(str(exc), id=eid) from exc
        for eid in sorted(self._edge_index):
            edge = self.edge(eid)
            sig = edge.kind.signature
            if sig.max_out is not None and len(self.out_edges(edge.source, edge.kind)) > sig.max_out:
                raise SchemaViolation(f"{edge.kind.value} {sig.cardinality} broken at {eid}", id=eid)
            if sig.max_in is not None and len(self.in_edges(edge.target, edge.kind)) > sig.max_in:
                raise SchemaViolation(f"{edge.kind.value} {sig.cardinality} broken at {eid}", id=eid)
            if edge.kind in _OWNERSHIP:
                owners = sum(len(self.in_edges(edge.target, r)) for r in _OWNERSHIP)
                if owners > 1:
                    raise SchemaViolation(f"interface {edge.target} has {owners} owners", id=eid)
        for vid in sorted(self._g.nodes):
            kind = self._g.nodes[vid]["kind"]
            if kind is EntityKind.COMPONENT and not self.out_edges(vid, RelationKind.INSTANCE_OF_COMPONENT_MODEL):
                raise SchemaViolation(f"component {vid} has no model", id=vid)
            if kind is EntityKind.INTERFACE and not self.out_edges(vid, RelationKind.INSTANCE_OF_INTERFACE_MODEL):
                raise SchemaViolation(f"interface {vid} has no model", id=vid)
        for pair in sorted(sorted(p) for p in self._compatible):
            try:
                self._rule_same_domain(*pair)
            except DomainMismatch as exc:
                raise SchemaViolation(exc.message, id=pair[0], models=pair) from exc
        rules = {
            RelationKind.CONNECTED_TO: self._rule_connection,
            RelationKind.PART_OF_COMPOSITION: self._rule_composition,
            RelationKind.SUBCLASS_OF: self._rule_acyclic_subclass,
            RelationKind.MODEL_HAS_INTERFACE: self._rule_unique_interface_label,
            RelationKind.COMPONENT_HAS_INTERFACE: self._rule_unique_interface_label,
        }
        for eid in sorted(self._edge_index):
            edge = self.edge(eid)
            rule = rules.get(edge.kind)
            if rule is None:
                continue
            try:
                rule(edge.source, edge.target)
            except CapCycleError as exc:
                raise SchemaViolation(f"edge {eid}: {exc.message}", id=eid) from exc

    # ------------------------------------------------------------------ rules
    # Each rule holds before an operator adds its edge and still holds once the
    # edge is stored, so validate() can replay them after a load.

    def _rule_same_domain(self, model_a: str, model_b: str) -> None:
        a, b = self.vertex(model_a), self.vertex(model_b)
        if a.domain is not b.domain:
            raise DomainMismatch(
                f"interface models {a.label} and {b.label} live in different domains",
                models=[model_a, model_b],
            )

    def _rule_connection(self, iface_a: str, iface_b: str) -> None:
        model_a, model_b = self.model_of(iface_a), self.model_of(iface_b)
        if not self.is_compatible(model_a, model_b):
            raise IncompatibleInterfaces(
                f"{self.vertex(model_a).label} does not fit {self.vertex(model_b).label}",
                interfaces=[iface_a, iface_b],
            )

    def _rule_composition(self, component: str, model: str) -> None:
        """Only Assembly models compose parts from another domain."""
        whole = self.vertex(model)
        if whole.domain is Domain.ASSEMBLY:
            return
        part_domain = self.vertex(self.model_of(component)).domain
        if part_domain is not whole.domain:
            raise DomainMismatch(
                f"only Assembly models compose across domains: {self.vertex(component).label} is "
                f"{part_domain.value if part_domain else '?'}, {whole.label} is "
                f"{whole.domain.value if whole.domain else '?'}",
                component=component,
                model=model,
            )

    def _rule_acyclic_subclass(self, child: str, parent: str) -> None:
        ancestor: str | None = parent
        seen: set[str] = set()
        while ancestor is not None and ancestor not in seen:
            if ancestor == child:
                raise SchemaViolation(f"subclass cycle through {child}", id=child)
            seen.add(ancestor)
            supers = self.out_edges(ancestor, RelationKind.SUBCLASS_OF)
            ancestor = supers[0].target if supers else None

    def _rule_unique_interface_label(self, owner: str, iface: str) -> None:
        label = self.vertex(iface).label
        if any(i != iface and self.vertex(i).label == label for i in self.interfaces(owner)):
            raise DuplicateName(f"{owner} already exposes an interface {label!r}", owner=owner)

    # -------------------------------------------------------------- internals

    def _require(self, vertex_id: str, kind: EntityKind, error: type[Exception]) -> Vertex:
        if vertex_id not in self._g:
            raise error(f"unknown {kind.value} {vertex_id!r}", id=vertex_id)
        v = self.vertex(vertex_id)
        if v.kind is not kind:
            if error is UnknownEntity:
                raise KindMismatch(f"{vertex_id} is a {v.kind.value}, expected {kind.value}", id=vertex_id)
            raise error(f"{vertex_id} is a {v.kind.value}, expected {kind.value}", id=vertex_id)
        return v

    def _create_model(self, kind: EntityKind, domain: Domain, name: str, properties: dict[str, Any]) -> str:
        with self._lock:
            _require_name(name)
            domain = Domain(domain)
            if self.find_model(kind, domain, name) is not None:
                raise DuplicateName(f"{kind.value} {domain.value}/{name} already exists", name=name)
            props = _clean_properties(properties)
            return self._add_vertex(kind, {**props, "label": name, "domain": domain.value})

    def _attach_interface(self, relation: RelationKind, owner: str, iface: str) -> str:
        self._check_signature(relation, owner, iface)
        self._rule_unique_interface_label(owner, iface)
        owner_now = self.owner_of(iface)
        if owner_now is not None:
            raise CardinalityViolation(
                f"interface {iface} already belongs to {owner_now} ({relation.signature.cardinality})",
                interface=iface,
            )
        return self._checked_edge(relation, owner, iface)

    def _check_signature(self, relation: RelationKind, source: str, target: str) -> None:
        sig = relation.signature
        for vertex_id, expected in ((source, sig.source), (target, sig.target)):
            if vertex_id not in self._g:
                raise UnknownEntity(f"unknown vertex {vertex_id!r}", id=vertex_id)
            actual = self._g.nodes[vertex_id]["kind"]
            if actual is not expected:
                raise KindMismatch(
                    f"{relation.value} expects {sig.source.value} -> {sig.target.value}, "
                    f"got {vertex_id} of kind {actual.value}",
                    id=vertex_id,
                )

    def _checked_edge(self, relation: RelationKind, source: str, target: str) -> str:
        self._check_signature(relation, source, target)
        sig = relation.signature
        if sig.max_out is not None and len(self.out_edges(source, relation)) >= sig.max_out:
            raise CardinalityViolation(
                f"{source} already has a {relation.value} edge ({sig.cardinality})", id=source
            )
        if sig.max_in is not None and len(self.in_edges(target, relation)) >= sig.max_in:
            raise CardinalityViolation(
                f"{target} already has an incoming {relation.value} edge ({sig.cardinality})", id=target
            )
        return self._add_edge(relation, source, target)

    def _new_id(self) -> str:
        new_id = f"{self.prefix}-{self._next_id:06d}"
        self._next_id += 1
        return new_id

    def _add_vertex(self, kind: EntityKind, props: dict[str, str]) -> str:
        vertex_id = self._new_id()
        self._g.add_node(vertex_id, kind=kind, props=props)
        return vertex_id

    def _add_edge(self, relation: RelationKind, source: str, target: str) -> str:
        edge_id = self._new_id()
        self._g.add_edge(source, target, key=edge_id, kind=relation, props={"label": relation.value})
        self._edge_index[edge_id] = (source, target)
        return edge_id

    # ---------------------------------------------------------- serialization

    def to_lines(self) -> list[str]:
        header = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "prefix": self.prefix, "next_id": self._next_id}
        records: list[dict[str, Any]] = [header]
        for v in self.vertices():
            records.append({"record": "vertex", "id": v.id, "kind": v.kind.value, "properties": v.properties})
        for e in self.edges():
            records.append({
                "record": "edge", "id": e.id, "kind": e.kind.value,
                "source": e.source, "target": e.target, "properties": e.properties,
            })
        for pair in sorted(sorted(p) for p in self._compatible):
            records.append({"record": "compatible", "models": pair})
        return [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records]

    @classmethod
    def from_lines(cls, lines: list[str]) -> "PropertyGraph":
        """Parse a saved graph; anything ``to_lines`` could never have written raises SchemaViolation."""
        rows = [line for line in lines if line.strip()]
        if not rows:
            raise SchemaViolation("empty graph document", id="header")
        try:
            header = json.loads(rows[0])
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"unreadable header: {exc}", id="header") from exc
        if (
            not isinstance(header, dict)
            or set(header) != _HEADER_KEYS
            or header["format"] != FORMAT_NAME
            or not _is_int(header["version"])
            or header["version"] != FORMAT_VERSION
        ):
            raise SchemaViolation("not a capcycle-graph v1 document", id="header")
        prefix, next_id = header["prefix"], header["next_id"]
        if not isinstance(prefix, str) or not prefix or not _is_int(next_id) or next_id < 1:
            raise SchemaViolation("header needs a string prefix and a positive id counter", id="header")
        graph = cls(prefix=prefix)
        graph._next_id = next_id
        highest = 0
        previous: tuple[int, Any] | None = None
        for row in rows[1:]:
            try:
                record = json.loads(row)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"malformed record: {row[:80]}", id="record") from exc
            if not isinstance(record, dict):
                raise SchemaViolation(f"malformed record: {row[:80]}", id="record")
            try:
                highest = max(highest, graph._load_record(record))
            except (KeyError, ValueError, TypeError) as exc:
                raise SchemaViolation(f"malformed record: {row[:80]}", id="record") from exc
            # vertices, then edges, then compatibility pairs, each ascending
            position = (_RECORD_ORDER[record["record"]], record.get("id", record.get("models")))
            if previous is not None and position <= previous:
                raise SchemaViolation(f"record out of order: {row[:80]}", id="record")
            previous = position
        if graph._next_id <= highest:
            raise SchemaViolation("id counter behind stored ids", id="header")
        graph.validate()
        return graph

    def _load_record(self, record: dict[str, Any]) -> int:
        kind = record.get("record")
        expected = _RECORD_KEYS.get(kind) if isinstance(kind, str) else None
        if expected is None:
            raise SchemaViolation(f"unknown record type {kind!r}", id="record")
        if set(record) != expected:
            raise SchemaViolation(f"{kind} record has fields {sorted(record)}", id="record")
        if kind == "compatible":
            return self._load_compatible(record["models"])
        element_id = record["id"]
        number = _id_number(self.prefix, element_id)
        if number is None:
            raise SchemaViolation(f"id {element_id!r} was not issued by this graph", id="record")
        if element_id in self._g or element_id in self._edge_index:
            raise SchemaViolation(f"duplicate id {element_id}", id=element_id)
        props = record["properties"]
        if not isinstance(props, dict) or not all(isinstance(v, str) for v in props.values()):
            raise SchemaViolation(f"{element_id} properties must be string-valued", id=element_id)
        if kind == "vertex":
            self._g.add_node(element_id, kind=EntityKind(record["kind"]), props=dict(props))
            return number
        source, target = record["source"], record["target"]
        if not isinstance(source, str) or not isinstance(target, str) or source not in self._g or target not in self._g:
            raise SchemaViolation(f"edge {element_id} has a dangling endpoint", id=element_id)
        self._g.add_edge(source, target, key=element_id, kind=RelationKind(record["kind"]), props=dict(props))
        self._edge_index[element_id] = (source, target)
        return number

    def _load_compatible(self, models: Any) -> int:
        # pairs are stored as two distinct ids in sorted order
        if not (
            isinstance(models, list)
            and len(models) == 2
            and all(isinstance(m, str) for m in models)
            and models[0] < models[1]
        ):
            raise SchemaViolation(f"compatibility needs a sorted pair of distinct models, got {models!r}", id="record")
        for model in models:
            if model not in self._g or self._g.nodes[model]["kind"] is not EntityKind.INTERFACE_MODEL:
                raise SchemaViolation(f"compatibility refers to unknown model {model}", id=model)
        pair = frozenset(models)
        if pair in self._compatible:
            raise SchemaViolation(f"compatibility {models} listed twice", id=models[0])
        self._compatible.add(pair)
        return 0


def save(graph: PropertyGraph, path: str | Path) -> None:
    try:
        Path(path).write_text("\n".join(graph.to_lines()) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write graph to {path}: {exc}", path=str(path)) from exc


def load(path: str | Path) -> PropertyGraph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read graph from {path}: {exc}", path=str(path)) from exc
    return PropertyGraph.from_lines(text.splitlines())


def _require_name(name: str) -> None:
    if not isinstance(name, str) or not name.strip():
        raise EmptyName("names must be non-empty strings")


def _clean_properties(properties: dict[str, Any]) -> dict[str, str]:
    clash = RESERVED_KEYS.intersection(properties) | ({"domain"} & set(properties))
    if clash:
        raise KindMismatch(f"reserved property keys cannot be set directly: {sorted(clash)}")
    return {str(k): str(v) for k, v in properties.items()}


def _id_number(prefix: str, element_id: Any) -> int | None:
    """Counter value of an id in the form the graph issues them, else None."""
    if not isinstance(element_id, str):
        return None
    head, _, tail = element_id.rpartition("-")
    if head != prefix or not tail.isdigit() or int(tail) < 1:
        return None
    return int(tail) if element_id == f"{prefix}-{int(tail):06d}" else None


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)
