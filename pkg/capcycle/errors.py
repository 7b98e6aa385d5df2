"""Exception hierarchy shared by every capcycle module.

Each error carries a stable ``code`` and the name of the owning ``module`` so the
CLI can emit a machine-readable record without inspecting exception types.
"""

from __future__ import annotations

from typing import Any


class CapCycleError(Exception):
    """Root of all domain errors."""

    code = "CAPCYCLE_ERROR"
    module = "capcycle"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {"code": self.code, "module": self.module, "message": self.message}
        if self.details:
            record["details"] = {key: _plain(value) for key, value in sorted(self.details.items())}
        return record


def _plain(value: Any) -> Any:
    if isinstance(value, (list, tuple, set, frozenset)):
        items = [_plain(v) for v in value]
        return sorted(items, key=str) if isinstance(value, (set, frozenset)) else items
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


# graphstore

class GraphError(CapCycleError):
    module = "graphstore"


class DuplicateName(GraphError):
    code = "DUPLICATE_NAME"


class EmptyName(GraphError):
    code = "EMPTY_NAME"


class UnknownModel(GraphError):
    code = "UNKNOWN_MODEL"


class UnknownEntity(GraphError):
    code = "UNKNOWN_ENTITY"


class UnknownInterface(GraphError):
    code = "UNKNOWN_INTERFACE"


class IncompatibleInterfaces(GraphError):
    code = "INCOMPATIBLE_INTERFACES"


class CardinalityViolation(GraphError):
    code = "CARDINALITY_VIOLATION"


class KindMismatch(GraphError):
    code = "KIND_MISMATCH"


class DomainMismatch(GraphError):
    code = "DOMAIN_MISMATCH"


class SchemaViolation(GraphError):
    code = "SCHEMA_VIOLATION"


class IoFailure(CapCycleError):
    code = "IO_FAILURE"
    module = "project"


# simkin / cfm

class MissingAnnotation(CapCycleError):
    code = "MISSING_ANNOTATION"
    module = "simkin"


class NonTreeStructure(CapCycleError):
    code = "NON_TREE_STRUCTURE"
    module = "simkin"


class DimensionMismatch(CapCycleError):
    code = "DIMENSION_MISMATCH"
    module = "cfm"


class PhaseOutOfRange(CapCycleError):
    code = "PHASE_OUT_OF_RANGE"
    module = "cfm"


class ParameterOutOfBounds(CapCycleError):
    code = "PARAMETER_OUT_OF_BOUNDS"
    module = "cfm"


# explore / cluster

class SingleClassData(CapCycleError):
    code = "SINGLE_CLASS_DATA"
    module = "explore"


class KTooLarge(CapCycleError):
    code = "K_TOO_LARGE"
    module = "cluster"


class DegenerateData(CapCycleError):
    code = "DEGENERATE_DATA"
    module = "cluster"


class UnknownFeatureSpace(CapCycleError):
    code = "UNKNOWN_FEATURE_SPACE"
    module = "cluster"


# cores

class CoreError(CapCycleError):
    module = "cores"


class MissingTarget(CoreError):
    code = "MISSING_TARGET"


class UnsatisfiableConstraint(CoreError):
    code = "UNSATISFIABLE_CONSTRAINT"


class NoFeasibleSample(CoreError):
    code = "NO_FEASIBLE_SAMPLE"


class UnknownOntologyPolicyViolation(CoreError):
    code = "UNKNOWN_ONTOLOGY_POLICY_VIOLATION"


class OverlappingActuators(CoreError):
    code = "OVERLAPPING_ACTUATORS"


class EmptyAnnotation(CoreError):
    code = "EMPTY_ANNOTATION"


class ProtectedLabel(CoreError):
    code = "PROTECTED_LABEL"


# reason

class ReasonError(CapCycleError):
    module = "reason"


class UnknownTerm(ReasonError):
    code = "UNKNOWN_TERM"


class UnknownTask(ReasonError):
    code = "UNKNOWN_TASK"


class NoMethod(ReasonError):
    code = "NO_METHOD"


class NoCapableRobot(ReasonError):
    code = "NO_CAPABLE_ROBOT"


class OntologyCycle(ReasonError):
    code = "ONTOLOGY_CYCLE"


# cli / project

class ProjectLocked(CapCycleError):
    code = "PROJECT_LOCKED"
    module = "project"


class UnknownArtifact(CapCycleError):
    code = "UNKNOWN_ARTIFACT"
    module = "project"


class UsageError(CapCycleError):
    code = "USAGE_ERROR"
    module = "cli"


CONFIG_INVALID = "CONFIG_INVALID"
INTERNAL_ERROR = "INTERNAL_ERROR"


def _all_error_classes() -> list[type[CapCycleError]]:
    found: list[type[CapCycleError]] = []
    pending = [CapCycleError]
    while pending:
        cls = pending.pop()
        found.append(cls)
        pending.extend(cls.__subclasses__())
    return found


ERROR_CODES: dict[str, str] = {
    cls.code: cls.module
    for cls in _all_error_classes()
    if cls.code not in ("CAPCYCLE_ERROR",)
}
ERROR_CODES[CONFIG_INVALID] = "cli"
ERROR_CODES[INTERNAL_ERROR] = "cli"
