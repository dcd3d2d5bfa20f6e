"""Experiment lifecycle: records, the status machine, telemetry, persistence.

The manager is the write path for everything that happens to an experiment:
creation, status transitions, events, metrics, logs, placement. Every
mutation is appended to the write-ahead store before the call returns, and
per-record mutations are serialized under one lock so backend callbacks and
API handlers never interleave mid-update.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from .errors import (
    AlreadyTerminal,
    EnvironmentNotFound,
    IllegalTransition,
    NonFiniteMetric,
    NotFound,
    ServiceError,
    ValidationFailed,
)
from .model import (
    Event,
    EventKind,
    ExperimentSpec,
    ExperimentStatus,
    MetricPoint,
    can_transition,
    event_from_wire,
    event_to_wire,
    is_terminal,
    metric_from_wire,
    metric_is_finite,
    metric_to_wire,
    spec_from_wire,
    spec_to_wire,
    validate_experiment_spec,
)
from .store import WalStore
from .templates import TemplateRegistry
from .environments import EnvironmentRegistry


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


def _new_id() -> str:
    return "exp-" + secrets.token_hex(6)


@dataclass
class LogEntry:
    line: str
    late: bool = False


@dataclass
class ExperimentRecord:
    id: str
    spec: ExperimentSpec
    resolved_image: str
    status: ExperimentStatus
    created_at: int
    finished_at: int | None = None
    template: dict[str, Any] | None = None  # {"name":..., "params":...} provenance
    events: list[Event] = field(default_factory=list)
    metrics: list[MetricPoint] = field(default_factory=list)
    logs: dict[str, list[LogEntry]] = field(default_factory=dict)
    placement: dict[str, str] | None = None  # task instance -> node id
    artifact_uris: list[str] = field(default_factory=list)

    def next_seq(self) -> int:
        return len(self.events)

    def summary(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.spec.meta.name,
            "namespace": self.spec.meta.namespace,
            "status": self.status.value,
            "created_at": self.created_at,
        }

    def to_wire(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "spec": spec_to_wire(self.spec),
            "resolved_image": self.resolved_image,
            "status": self.status.value,
            "template": self.template,
            "created_at": self.created_at,
            "finished_at": self.finished_at,
            "events": [event_to_wire(e) for e in self.events],
            "metrics": [metric_to_wire(m) for m in self.metrics],
            "logs": {
                task: [{"line": e.line, "late": e.late} for e in entries]
                for task, entries in self.logs.items()
            },
            "placement": self.placement,
            "artifact_uris": list(self.artifact_uris),
        }

    def logs_text(self) -> str:
        """Plain-text rendering, one named section per task instance."""
        sections = []
        for task, entries in self.logs.items():
            lines = "\n".join(e.line for e in entries)
            sections.append(f"=== {task} ===\n{lines}\n" if lines else f"=== {task} ===\n")
        return "".join(sections)


class Submitter:
    """Backend contract: turn an accepted record into running tasks.

    submit() must return promptly; all subsequent lifecycle flows back
    through the manager (transition / telemetry). stop() halts a live
    experiment's tasks and must be idempotent.
    """

    backend = "none"

    def submit(self, record: ExperimentRecord):  # -> SubmissionHandle
        raise NotImplementedError

    def stop(self, experiment_id: str) -> None:
        raise NotImplementedError


class ExperimentManager:
    def __init__(
        self,
        store: WalStore | None,
        environments: EnvironmentRegistry,
        templates: TemplateRegistry,
        *,
        clock: Callable[[], int] = _now_ms,
        id_factory: Callable[[], str] = _new_id,
    ):
        self._store = store
        self._environments = environments
        self._templates = templates
        self._clock = clock
        self._new_id = id_factory
        self._lock = threading.RLock()
        self._records: dict[str, ExperimentRecord] = {}
        self._order: list[str] = []  # creation order, for stable listing
        self._submitter: Submitter | None = None
        environments.set_in_use_probe(self.environment_in_use)

    # -- wiring -----------------------------------------------------------

    def attach_submitter(self, submitter: Submitter) -> None:
        self._submitter = submitter

    def environment_in_use(self, name: str) -> bool:
        with self._lock:
            return any(
                r.spec.environment.name == name and not is_terminal(r.status)
                for r in self._records.values()
            )

    # -- persistence ------------------------------------------------------

    def restore(self, op: str, data: Any) -> None:
        if op == "experiment.create":
            record = record_from_wire(data)
            self._records[record.id] = record
            self._order.append(record.id)
            return
        record = self._records.get(data["id"])
        if record is None:
            return
        if op == "experiment.status":
            record.status = ExperimentStatus(data["status"])
            record.finished_at = data["finished_at"]
            record.events.append(event_from_wire(data["event"]))
        elif op == "experiment.event":
            record.events.append(event_from_wire(data["event"]))
        elif op == "experiment.metric":
            record.metrics.append(metric_from_wire(data["metric"]))
        elif op == "experiment.log":
            record.logs.setdefault(data["task"], []).append(
                LogEntry(line=data["line"], late=data.get("late", False))
            )
        elif op == "experiment.placement":
            record.placement = data["placement"]
        elif op == "experiment.artifact":
            record.artifact_uris.append(data["uri"])

    def _persist(self, op: str, data: Any) -> None:
        if self._store is not None:
            self._store.append(op, data)

    def orphan_sweep(self) -> list[str]:
        """Fail every non-terminal record; submitters hold no durable handles,
        so nothing that was live before a restart can still be running."""
        orphaned = []
        with self._lock:
            for record in self._records.values():
                if not is_terminal(record.status):
                    self._transition_locked(
                        record, ExperimentStatus.FAILED, "orphaned at restart"
                    )
                    orphaned.append(record.id)
        return orphaned

    # -- creation ---------------------------------------------------------

    def _resolve_image(self, spec: ExperimentSpec) -> str:
        if spec.environment.image:
            return spec.environment.image
        try:
            return self._environments.get(spec.environment.name or "").image
        except NotFound:
            raise EnvironmentNotFound(
                f"environment '{spec.environment.name}' is not registered"
            ) from None

    def create(self, spec: ExperimentSpec) -> ExperimentRecord:
        violations = validate_experiment_spec(spec)
        if violations:
            raise ValidationFailed(
                "experiment spec is invalid", details=[v.as_dict() for v in violations]
            )
        resolved_image = self._resolve_image(spec)
        with self._lock:
            now = self._clock()
            record = ExperimentRecord(
                id=self._new_id(),
                spec=spec,
                resolved_image=resolved_image,
                status=ExperimentStatus.ACCEPTED,
                created_at=now,
            )
            record.events.append(
                Event(timestamp=now, seq=0, kind=EventKind.STATUS_CHANGE, detail="Accepted")
            )
            self._records[record.id] = record
            self._order.append(record.id)
            self._persist("experiment.create", record.to_wire())
        self._hand_to_submitter(record)
        return record

    def create_from_template(self, name: str, params: Mapping[str, str]) -> ExperimentRecord:
        spec = self._templates.instantiate(name, params)
        violations = validate_experiment_spec(spec)
        if violations:
            raise ValidationFailed(
                "experiment spec is invalid", details=[v.as_dict() for v in violations]
            )
        resolved_image = self._resolve_image(spec)
        with self._lock:
            now = self._clock()
            record = ExperimentRecord(
                id=self._new_id(),
                spec=spec,
                resolved_image=resolved_image,
                status=ExperimentStatus.ACCEPTED,
                created_at=now,
                template={"name": name, "params": dict(params)},
            )
            record.events.append(
                Event(timestamp=now, seq=0, kind=EventKind.STATUS_CHANGE, detail="Accepted")
            )
            self._records[record.id] = record
            self._order.append(record.id)
            self._persist("experiment.create", record.to_wire())
        self._hand_to_submitter(record)
        return record

    def _hand_to_submitter(self, record: ExperimentRecord) -> None:
        if self._submitter is None:
            return
        try:
            self._submitter.submit(record)
        except ServiceError as exc:
            self.try_transition(
                record.id, ExperimentStatus.FAILED, f"{exc.code}: {exc.message}"
            )

    # -- reads --------------------------------------------------------------

    def get(self, experiment_id: str) -> ExperimentRecord:
        with self._lock:
            try:
                return self._records[experiment_id]
            except KeyError:
                raise NotFound(f"experiment '{experiment_id}' not found") from None

    def list(self, namespace: str | None = None, limit: int | None = None) -> list[dict[str, Any]]:
        with self._lock:
            records = [self._records[i] for i in self._order]
        if namespace is not None:
            records = [r for r in records if r.spec.meta.namespace == namespace]
        # newest first; creation order breaks same-millisecond ties
        records.reverse()
        records.sort(key=lambda r: r.created_at, reverse=True)
        if limit is not None:
            records = records[: max(limit, 0)]
        return [r.summary() for r in records]

    # -- lifecycle ----------------------------------------------------------

    def _append_event_locked(self, record: ExperimentRecord, kind: EventKind, detail: str,
                             late: bool = False) -> Event:
        last_ts = record.events[-1].timestamp if record.events else 0
        event = Event(
            timestamp=max(self._clock(), last_ts),  # timestamps never regress
            seq=record.next_seq(),
            kind=kind,
            detail=detail,
            late=late,
        )
        record.events.append(event)
        return event

    def _transition_locked(
        self, record: ExperimentRecord, new: ExperimentStatus, reason: str
    ) -> None:
        if not can_transition(record.status, new):
            raise IllegalTransition(
                f"cannot transition {record.status.value} -> {new.value}"
            )
        detail = f"{new.value} - {reason}" if reason else new.value
        event = self._append_event_locked(record, EventKind.STATUS_CHANGE, detail)
        record.status = new
        if is_terminal(new):
            record.finished_at = event.timestamp
        self._persist(
            "experiment.status",
            {
                "id": record.id,
                "status": new.value,
                "finished_at": record.finished_at,
                "event": event_to_wire(event),
            },
        )

    def transition(self, experiment_id: str, new: ExperimentStatus, reason: str = "") -> ExperimentRecord:
        with self._lock:
            record = self.get(experiment_id)
            self._transition_locked(record, new, reason)
            return record

    def try_transition(self, experiment_id: str, new: ExperimentStatus, reason: str = "") -> bool:
        """Transition unless the record is already terminal (backends racing a kill)."""
        try:
            self.transition(experiment_id, new, reason)
            return True
        except IllegalTransition:
            return False

    def kill(self, experiment_id: str, reason: str = "killed by user") -> ExperimentRecord:
        with self._lock:
            record = self.get(experiment_id)
            if is_terminal(record.status):
                raise AlreadyTerminal(
                    f"experiment '{experiment_id}' is already {record.status.value}"
                )
            self._transition_locked(record, ExperimentStatus.KILLED, reason)
        if self._submitter is not None:
            self._submitter.stop(experiment_id)
        return record

    # -- telemetry ------------------------------------------------------------

    def append_event(self, experiment_id: str, kind: EventKind, detail: str) -> Event:
        with self._lock:
            record = self.get(experiment_id)
            late = is_terminal(record.status)
            event = self._append_event_locked(record, kind, detail, late=late)
            self._persist(
                "experiment.event", {"id": record.id, "event": event_to_wire(event)}
            )
            return event

    def append_metric(self, experiment_id: str, point: MetricPoint) -> MetricPoint:
        if not metric_is_finite(point):
            raise NonFiniteMetric(f"metric '{point.key}' value must be finite")
        with self._lock:
            record = self.get(experiment_id)
            stored = MetricPoint(
                key=point.key,
                value=point.value,
                step=point.step,
                timestamp=point.timestamp or self._clock(),
                late=is_terminal(record.status),
            )
            record.metrics.append(stored)
            self._persist(
                "experiment.metric", {"id": record.id, "metric": metric_to_wire(stored)}
            )
            return stored

    def append_log(self, experiment_id: str, task: str, line: str) -> None:
        with self._lock:
            record = self.get(experiment_id)
            entry = LogEntry(line=line, late=is_terminal(record.status))
            record.logs.setdefault(task, []).append(entry)
            self._persist(
                "experiment.log",
                {"id": record.id, "task": task, "line": entry.line, "late": entry.late},
            )

    def record_placement(self, experiment_id: str, placement: Mapping[str, str]) -> None:
        with self._lock:
            record = self.get(experiment_id)
            record.placement = dict(placement)
            self._persist(
                "experiment.placement", {"id": record.id, "placement": record.placement}
            )

    def add_artifact(self, experiment_id: str, uri: str) -> None:
        with self._lock:
            record = self.get(experiment_id)
            record.artifact_uris.append(uri)
            self._persist("experiment.artifact", {"id": record.id, "uri": uri})


def record_from_wire(doc: Mapping[str, Any]) -> ExperimentRecord:
    spec = spec_from_wire(doc["spec"])
    record = ExperimentRecord(
        id=str(doc["id"]),
        spec=spec,
        resolved_image=str(doc["resolved_image"]),
        status=ExperimentStatus(doc["status"]),
        created_at=int(doc["created_at"]),
        finished_at=doc.get("finished_at"),
        template=doc.get("template"),
        events=[event_from_wire(e) for e in doc.get("events", [])],
        metrics=[metric_from_wire(m) for m in doc.get("metrics", [])],
        logs={
            task: [LogEntry(line=e["line"], late=e.get("late", False)) for e in entries]
            for task, entries in doc.get("logs", {}).items()
        },
        placement=doc.get("placement"),
        artifact_uris=list(doc.get("artifact_uris", [])),
    )
    return record


def replay_into(
    store: WalStore,
    manager: ExperimentManager,
    templates: TemplateRegistry,
    environments: EnvironmentRegistry,
) -> None:
    """Rebuild all service state from the store's log."""
    for op, data in store.replay():
        if op.startswith("experiment."):
            manager.restore(op, data)
        elif op.startswith("template."):
            templates.restore(op, data)
        elif op.startswith("environment."):
            environments.restore(op, data)


def iter_records_wire(manager: ExperimentManager) -> Iterable[dict[str, Any]]:
    with manager._lock:
        ids = list(manager._order)
    for experiment_id in ids:
        yield manager.get(experiment_id).to_wire()
