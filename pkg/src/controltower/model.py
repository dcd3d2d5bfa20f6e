"""Experiment specification types, the status machine, and wire codecs.

All types here are immutable values: construct, validate with
:func:`validate_experiment_spec`, share freely. Construction is deliberately
permissive (shape only) so that invalid states can be represented and
reported as violations instead of constructor exceptions.

The canonical wire encoding is JSON with the task map under ``spec`` and
resources as canonical strings::

    {"meta": {...}, "spec": {"Ps": {"replicas": 1, "resources": "cpu=2,..."},
     ...}, "environment": {"image": "..."}}
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from .errors import ArithmeticOverflow, ValidationFailed
from .resources import (
    ResourceSpec,
    format_resource_string,
    parse_task_resources,
)

NAME_RE = re.compile(r"^[a-z0-9]([-a-z0-9]*[a-z0-9])?$")
NAME_MAX_LEN = 63

# Totals beyond a signed 64-bit word are treated as overflow.
_INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class ExperimentMeta:
    name: str
    namespace: str = "default"
    framework: str = ""
    cmd: str = ""


@dataclass(frozen=True)
class ExperimentTaskSpec:
    replicas: int
    resources: ResourceSpec
    launch_cmd_override: str | None = None


@dataclass(frozen=True)
class EnvironmentRef:
    """Reference to the execution environment: a registry name or an inline image."""

    name: str | None = None
    image: str | None = None

    @classmethod
    def registered(cls, name: str) -> "EnvironmentRef":
        return cls(name=name)

    @classmethod
    def inline_image(cls, image: str) -> "EnvironmentRef":
        return cls(image=image)


@dataclass(frozen=True)
class ExperimentSpec:
    meta: ExperimentMeta
    environment: EnvironmentRef
    tasks: dict[str, ExperimentTaskSpec]  # ordered role -> task; treat as frozen
    conf: dict[str, str] = field(default_factory=dict)
    training_data: str | None = None  # opaque, never interpreted
    placement_constraints: str | None = None  # opaque, never interpreted


class ExperimentStatus(str, Enum):
    ACCEPTED = "Accepted"
    QUEUED = "Queued"
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"
    KILLED = "Killed"


TERMINAL_STATUSES = frozenset(
    {ExperimentStatus.SUCCEEDED, ExperimentStatus.FAILED, ExperimentStatus.KILLED}
)

LEGAL_TRANSITIONS: dict[ExperimentStatus, frozenset[ExperimentStatus]] = {
    ExperimentStatus.ACCEPTED: frozenset(
        {
            ExperimentStatus.QUEUED,
            ExperimentStatus.RUNNING,
            ExperimentStatus.FAILED,
            ExperimentStatus.KILLED,
        }
    ),
    ExperimentStatus.QUEUED: frozenset(
        {ExperimentStatus.RUNNING, ExperimentStatus.FAILED, ExperimentStatus.KILLED}
    ),
    ExperimentStatus.RUNNING: frozenset(
        {ExperimentStatus.SUCCEEDED, ExperimentStatus.FAILED, ExperimentStatus.KILLED}
    ),
    ExperimentStatus.SUCCEEDED: frozenset(),
    ExperimentStatus.FAILED: frozenset(),
    ExperimentStatus.KILLED: frozenset(),
}


def is_terminal(status: ExperimentStatus) -> bool:
    return status in TERMINAL_STATUSES


def can_transition(current: ExperimentStatus, new: ExperimentStatus) -> bool:
    return new in LEGAL_TRANSITIONS[current]


class EventKind(str, Enum):
    STATUS_CHANGE = "StatusChange"
    SCHEDULED = "Scheduled"
    TASK_STARTED = "TaskStarted"
    TASK_FINISHED = "TaskFinished"
    LOG_LINE = "LogLine"
    ERROR = "Error"


@dataclass(frozen=True)
class Event:
    timestamp: int  # epoch milliseconds
    seq: int  # insertion sequence within one experiment
    kind: EventKind
    detail: str
    late: bool = False  # arrived after a terminal status


@dataclass(frozen=True)
class MetricPoint:
    key: str
    value: float
    step: int = 0
    timestamp: int = 0
    late: bool = False


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def as_dict(self) -> dict[str, str]:
        return {"path": self.path, "message": self.message}


def _check_resources(path: str, r: ResourceSpec, out: list[Violation]) -> None:
    for fname, value in (("vcores", r.vcores), ("gpu", r.gpu), ("memory_mib", r.memory_mib)):
        if value < 0:
            out.append(Violation(f"{path}.{fname}", "must be >= 0"))


def validate_experiment_spec(spec: ExperimentSpec) -> list[Violation]:
    """Check every invariant, returning a violation per failure (empty = valid)."""
    out: list[Violation] = []

    name = spec.meta.name
    if not name:
        out.append(Violation("meta.name", "must be non-empty"))
    elif len(name) > NAME_MAX_LEN:
        out.append(Violation("meta.name", f"must be <= {NAME_MAX_LEN} characters"))
    elif not NAME_RE.match(name):
        out.append(
            Violation("meta.name", "must match [a-z0-9]([-a-z0-9]*[a-z0-9])?")
        )
    if not spec.meta.namespace:
        out.append(Violation("meta.namespace", "must be non-empty"))

    env = spec.environment
    set_refs = [v for v in (env.name, env.image) if v]
    if len(set_refs) == 0:
        out.append(Violation("environment", "requires a registered name or an inline image"))
    elif env.name and env.image:
        out.append(Violation("environment", "name and image are mutually exclusive"))

    if not spec.tasks:
        out.append(Violation("tasks", "at least one task role"))
    for role, task in spec.tasks.items():
        if task.replicas < 1:
            out.append(Violation(f"tasks.{role}.replicas", "must be >= 1"))
        _check_resources(f"tasks.{role}.resources", task.resources, out)

    return out


@dataclass(frozen=True)
class RoleDemand:
    replicas: int
    resources: ResourceSpec


@dataclass(frozen=True)
class DemandSummary:
    per_role: dict[str, RoleDemand]
    totals: ResourceSpec

    def instances(self) -> list[tuple[str, ResourceSpec]]:
        """Expand into per-instance demands, ids `<Role>-<rank>` in role order."""
        out = []
        for role, demand in self.per_role.items():
            for rank in range(demand.replicas):
                out.append((f"{role}-{rank}", demand.resources))
        return out


def aggregate_demand(spec: ExperimentSpec) -> DemandSummary:
    """Total simultaneous demand of a gang: sum of replicas x resources per role."""
    per_role: dict[str, RoleDemand] = {}
    totals = ResourceSpec()
    for role, task in spec.tasks.items():
        per_role[role] = RoleDemand(task.replicas, task.resources)
        totals = totals.plus(task.resources.scaled(task.replicas))
    if max(totals.vcores, totals.gpu, totals.memory_mib) > _INT64_MAX:
        raise ArithmeticOverflow("aggregate demand exceeds 64-bit range")
    return DemandSummary(per_role=per_role, totals=totals)


# -- wire codecs ---------------------------------------------------------------


def canonical_json(doc: Any) -> str:
    """The one JSON rendering used for golden files and persisted records."""
    return json.dumps(doc, indent=2, ensure_ascii=False)


def spec_to_wire(spec: ExperimentSpec) -> dict[str, Any]:
    meta = {
        "name": spec.meta.name,
        "namespace": spec.meta.namespace,
        "framework": spec.meta.framework,
        "cmd": spec.meta.cmd,
    }
    tasks: dict[str, Any] = {}
    for role, task in spec.tasks.items():
        entry: dict[str, Any] = {
            "replicas": task.replicas,
            "resources": format_resource_string(task.resources),
        }
        if task.launch_cmd_override is not None:
            entry["launch_cmd_override"] = task.launch_cmd_override
        tasks[role] = entry
    env: dict[str, Any] = {}
    if spec.environment.name:
        env["name"] = spec.environment.name
    if spec.environment.image:
        env["image"] = spec.environment.image
    doc: dict[str, Any] = {"meta": meta, "spec": tasks, "environment": env}
    if spec.conf:
        doc["conf"] = dict(spec.conf)
    if spec.training_data is not None:
        doc["training_data"] = spec.training_data
    if spec.placement_constraints is not None:
        doc["placement_constraints"] = spec.placement_constraints
    return doc


def spec_canonical_json(spec: ExperimentSpec) -> str:
    return canonical_json(spec_to_wire(spec))


def _expect_mapping(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise ValidationFailed(
            f"{path} must be an object",
            details=[Violation(path, "must be an object").as_dict()],
        )
    return value


def _expect_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ValidationFailed(
            f"{path} must be a string",
            details=[Violation(path, "must be a string").as_dict()],
        )
    return value


def _reject_unknown(doc: Mapping[str, Any], allowed: set[str], path: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ValidationFailed(
            f"{path}: unknown fields {unknown}",
            details=[Violation(path, f"unknown fields {unknown}").as_dict()],
        )


def task_from_wire(role: str, doc: Any) -> ExperimentTaskSpec:
    body = _expect_mapping(doc, f"spec.{role}")
    _reject_unknown(body, {"replicas", "resources", "launch_cmd_override"}, f"spec.{role}")
    if "resources" not in body:
        raise ValidationFailed(
            f"spec.{role}.resources is required",
            details=[Violation(f"spec.{role}.resources", "is required").as_dict()],
        )
    resources, inline_replicas = parse_task_resources(
        _expect_str(body["resources"], f"spec.{role}.resources")
    )
    replicas = body.get("replicas")
    if replicas is not None and not isinstance(replicas, int):
        raise ValidationFailed(
            f"spec.{role}.replicas must be an integer",
            details=[Violation(f"spec.{role}.replicas", "must be an integer").as_dict()],
        )
    if replicas is not None and inline_replicas is not None and replicas != inline_replicas:
        raise ValidationFailed(
            f"spec.{role}: replicas field and inline replicas disagree",
            details=[
                Violation(
                    f"spec.{role}.replicas",
                    f"field says {replicas}, resource string says {inline_replicas}",
                ).as_dict()
            ],
        )
    effective = replicas if replicas is not None else inline_replicas
    if effective is None:
        effective = 1
    override = body.get("launch_cmd_override")
    if override is not None:
        override = _expect_str(override, f"spec.{role}.launch_cmd_override")
    return ExperimentTaskSpec(replicas=effective, resources=resources, launch_cmd_override=override)


def spec_from_wire(doc: Any) -> ExperimentSpec:
    """Decode the canonical JSON layout. Shape errors raise ValidationFailed;
    invariant checking stays with validate_experiment_spec."""
    body = _expect_mapping(doc, "spec document")
    _reject_unknown(
        body,
        {"meta", "spec", "environment", "conf", "training_data", "placement_constraints"},
        "spec document",
    )

    meta_doc = _expect_mapping(body.get("meta", {}), "meta")
    _reject_unknown(meta_doc, {"name", "namespace", "framework", "cmd"}, "meta")
    meta = ExperimentMeta(
        name=_expect_str(meta_doc.get("name", ""), "meta.name"),
        namespace=_expect_str(meta_doc.get("namespace", "default"), "meta.namespace"),
        framework=_expect_str(meta_doc.get("framework", ""), "meta.framework"),
        cmd=_expect_str(meta_doc.get("cmd", ""), "meta.cmd"),
    )

    env_doc = _expect_mapping(body.get("environment", {}), "environment")
    _reject_unknown(env_doc, {"name", "image"}, "environment")
    environment = EnvironmentRef(
        name=_expect_str(env_doc["name"], "environment.name") if "name" in env_doc else None,
        image=_expect_str(env_doc["image"], "environment.image") if "image" in env_doc else None,
    )

    tasks_doc = _expect_mapping(body.get("spec", {}), "spec")
    tasks = {role: task_from_wire(role, task_doc) for role, task_doc in tasks_doc.items()}

    conf_doc = _expect_mapping(body.get("conf", {}), "conf")
    conf = {k: _expect_str(v, f"conf.{k}") for k, v in conf_doc.items()}

    training_data = body.get("training_data")
    if training_data is not None:
        training_data = _expect_str(training_data, "training_data")
    placement_constraints = body.get("placement_constraints")
    if placement_constraints is not None:
        placement_constraints = _expect_str(placement_constraints, "placement_constraints")

    return ExperimentSpec(
        meta=meta,
        environment=environment,
        tasks=tasks,
        conf=conf,
        training_data=training_data,
        placement_constraints=placement_constraints,
    )


def event_to_wire(event: Event) -> dict[str, Any]:
    return {
        "timestamp": event.timestamp,
        "seq": event.seq,
        "kind": event.kind.value,
        "detail": event.detail,
        "late": event.late,
    }


def event_from_wire(doc: Mapping[str, Any]) -> Event:
    return Event(
        timestamp=int(doc["timestamp"]),
        seq=int(doc["seq"]),
        kind=EventKind(doc["kind"]),
        detail=str(doc["detail"]),
        late=bool(doc.get("late", False)),
    )


def metric_to_wire(point: MetricPoint) -> dict[str, Any]:
    return {
        "key": point.key,
        "value": point.value,
        "step": point.step,
        "timestamp": point.timestamp,
        "late": point.late,
    }


def metric_from_wire(doc: Mapping[str, Any]) -> MetricPoint:
    value = doc.get("value")
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValidationFailed("metric value must be a number")
    return MetricPoint(
        key=str(doc["key"]),
        value=float(value),
        step=int(doc.get("step", 0)),
        timestamp=int(doc.get("timestamp", 0)),
        late=bool(doc.get("late", False)),
    )


def metric_is_finite(point: MetricPoint) -> bool:
    return math.isfinite(point.value)
