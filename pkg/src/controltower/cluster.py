"""Simulated multi-node cluster backend: gang scheduling plus a FIFO queue.

The cluster is one logical state region under one lock: submissions, clock
ticks and admin operations are mutually serialized, and the whole simulation
is deterministic given an operation sequence (no wall-clock dependence;
durations come from each experiment's ``sim.duration_ms`` conf key).

Queue policy is strict FIFO without backfilling: after each release the head
is retried until it does not fit, and nothing behind the head ever jumps it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .errors import (
    DuplicateNodeId,
    MissingField,
    NotFound,
    Refused,
    UnknownField,
    UnknownHandle,
    ValidationFailed,
    YamlSyntax,
)
from .experiments import ExperimentManager, ExperimentRecord, Submitter
from .model import EventKind, ExperimentStatus, aggregate_demand
from .resources import ResourceSpec, format_resource_string, parse_resource_string
from .scheduler import Placement, gang_schedule
from .submitters import SubmissionHandle, BackendView

DEFAULT_TASK_DURATION_MS = 1000


@dataclass
class NodeState:
    node_id: str
    capacity: ResourceSpec
    allocated: ResourceSpec = field(default_factory=ResourceSpec)
    running_tasks: set[str] = field(default_factory=set)

    def free(self) -> ResourceSpec:
        return self.capacity.minus(self.allocated)

    def to_wire(self) -> dict[str, Any]:
        return {
            "node_id": self.node_id,
            "capacity": format_resource_string(self.capacity),
            "allocated": format_resource_string(self.allocated),
            "running_tasks": sorted(self.running_tasks),
        }


@dataclass
class _SimJob:
    experiment_id: str
    instances: list[tuple[str, ResourceSpec]]
    duration_ms: int
    placement: Placement | None = None
    started_at: int | None = None


def parse_cluster_config(text: str) -> list[tuple[str, ResourceSpec]]:
    """Cluster config YAML: a `nodes` list of {id, resources} entries."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise YamlSyntax(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise YamlSyntax("cluster config must be a YAML mapping")
    unknown = sorted(set(doc) - {"nodes"})
    if unknown:
        raise UnknownField(f"unknown cluster config fields: {unknown}")
    nodes_doc = doc.get("nodes")
    if not isinstance(nodes_doc, list):
        raise MissingField("cluster config requires a 'nodes' list")
    nodes: list[tuple[str, ResourceSpec]] = []
    seen: set[str] = set()
    for i, entry in enumerate(nodes_doc):
        if not isinstance(entry, Mapping):
            raise YamlSyntax(f"nodes[{i}] must be a mapping")
        extra = sorted(set(entry) - {"id", "resources"})
        if extra:
            raise UnknownField(f"nodes[{i}]: unknown fields {extra}")
        node_id = entry.get("id")
        if not node_id or not isinstance(node_id, str):
            raise MissingField(f"nodes[{i}] requires an 'id'")
        if node_id in seen:
            raise DuplicateNodeId(f"duplicate node id '{node_id}'")
        seen.add(node_id)
        resources = entry.get("resources")
        if not isinstance(resources, str):
            raise MissingField(f"nodes[{i}] requires a 'resources' string")
        nodes.append((node_id, parse_resource_string(resources)))
    return nodes


class ClusterSim(Submitter):
    backend = "simulated"

    def __init__(self, nodes: list[tuple[str, ResourceSpec]], manager: ExperimentManager):
        self._lock = threading.RLock()
        self._nodes: dict[str, NodeState] = {}
        for node_id, capacity in nodes:
            if node_id in self._nodes:
                raise DuplicateNodeId(f"duplicate node id '{node_id}'")
            self._nodes[node_id] = NodeState(node_id=node_id, capacity=capacity)
        self._manager = manager
        self._clock_ms = 0
        self._wait_queue: list[str] = []
        self._jobs: dict[str, _SimJob] = {}
        self._finished: dict[str, dict[str, int]] = {}

    # -- submitter contract -------------------------------------------------

    def submit(self, record: ExperimentRecord) -> SubmissionHandle:
        with self._lock:
            job = _SimJob(
                experiment_id=record.id,
                instances=aggregate_demand(record.spec).instances(),
                duration_ms=_duration_from_conf(record.spec.conf),
            )
            self._jobs[record.id] = job
            placement = self._try_place(job)
            if placement is not None:
                self._start(job, placement)
            elif self._feasible_on_empty(job):
                self._wait_queue.append(record.id)
                self._manager.try_transition(
                    record.id, ExperimentStatus.QUEUED, "waiting for capacity"
                )
            else:
                del self._jobs[record.id]
                self._manager.try_transition(
                    record.id, ExperimentStatus.FAILED, "exceeds cluster capacity"
                )
            return SubmissionHandle(
                experiment_id=record.id, backend=self.backend, token=record.id
            )

    def stop(self, experiment_id: str) -> None:
        with self._lock:
            if experiment_id in self._wait_queue:
                self._wait_queue.remove(experiment_id)
            job = self._jobs.get(experiment_id)
            if job is not None:
                if job.placement is not None:
                    self._release(job, completed=False)
                else:
                    del self._jobs[experiment_id]
                    self._finished[experiment_id] = {}
            self._drain_queue()  # freed capacity may admit the head

    def poll(self, handle: SubmissionHandle) -> BackendView:
        with self._lock:
            job = self._jobs.get(handle.token)
            if job is None:
                if handle.token in self._finished:
                    return BackendView(state="Exited", exit_codes=self._finished[handle.token])
                raise UnknownHandle(f"no simulated job for handle '{handle.token}'")
            if job.placement is None:
                return BackendView(state="Pending")
            return BackendView(state="Running")

    # -- simulation ----------------------------------------------------------

    def tick(self, dt_ms: int) -> dict[str, Any]:
        """Advance simulated time: complete due jobs, release, drain the queue head."""
        if dt_ms < 0:
            raise Refused("dt must be >= 0")
        with self._lock:
            self._clock_ms += dt_ms
            completed = []
            due = [
                job
                for job in self._jobs.values()
                if job.placement is not None
                and job.started_at is not None
                and job.started_at + job.duration_ms <= self._clock_ms
            ]
            due.sort(key=lambda j: (j.started_at + j.duration_ms, j.experiment_id))
            for job in due:
                for instance_id, _ in job.instances:
                    self._manager.append_event(
                        job.experiment_id, EventKind.TASK_FINISHED, f"{instance_id} completed"
                    )
                self._release(job)
                self._manager.try_transition(
                    job.experiment_id, ExperimentStatus.SUCCEEDED, "simulated run complete"
                )
                completed.append(job.experiment_id)
            self._drain_queue()
            return {"clock_ms": self._clock_ms, "completed": completed}

    def _drain_queue(self) -> None:
        while self._wait_queue:
            head = self._wait_queue[0]
            job = self._jobs.get(head)
            if job is None:  # killed while queued
                self._wait_queue.pop(0)
                continue
            placement = self._try_place(job)
            if placement is None:
                return
            self._wait_queue.pop(0)
            self._start(job, placement)

    def _free_by_node(self) -> dict[str, ResourceSpec]:
        return {node_id: node.free() for node_id, node in self._nodes.items()}

    def _try_place(self, job: _SimJob) -> Placement | None:
        return gang_schedule(job.instances, self._free_by_node())

    def _feasible_on_empty(self, job: _SimJob) -> bool:
        empty = {node_id: node.capacity for node_id, node in self._nodes.items()}
        return gang_schedule(job.instances, empty) is not None

    def _start(self, job: _SimJob, placement: Placement) -> None:
        for instance_id, node_id in placement.assignments.items():
            node = self._nodes[node_id]
            node.allocated = node.allocated.plus(placement.demands[instance_id])
            node.running_tasks.add(f"{job.experiment_id}/{instance_id}")
        job.placement = placement
        job.started_at = self._clock_ms
        self._manager.record_placement(job.experiment_id, placement.assignments)
        self._manager.try_transition(job.experiment_id, ExperimentStatus.RUNNING, "gang placed")
        detail = ", ".join(
            f"{instance}->{node}" for instance, node in sorted(placement.assignments.items())
        )
        self._manager.append_event(job.experiment_id, EventKind.SCHEDULED, detail)

    def _release(self, job: _SimJob, *, completed: bool = True) -> None:
        placement = job.placement
        if placement is None:
            return
        for instance_id, node_id in placement.assignments.items():
            node = self._nodes.get(node_id)
            if node is None:
                continue
            node.allocated = node.allocated.minus(placement.demands[instance_id])
            node.running_tasks.discard(f"{job.experiment_id}/{instance_id}")
        self._finished[job.experiment_id] = (
            {instance_id: 0 for instance_id, _ in job.instances} if completed else {}
        )
        del self._jobs[job.experiment_id]

    # -- admin -----------------------------------------------------------------

    def add_node(self, node_id: str, capacity: ResourceSpec) -> dict[str, Any]:
        with self._lock:
            if node_id in self._nodes:
                raise DuplicateNodeId(f"node '{node_id}' already exists")
            self._nodes[node_id] = NodeState(node_id=node_id, capacity=capacity)
            self._drain_queue()  # new capacity may admit the head
            return self.snapshot()

    def remove_node(self, node_id: str) -> dict[str, Any]:
        with self._lock:
            node = self._nodes.get(node_id)
            if node is None:
                raise NotFound(f"node '{node_id}' not found")
            if node.running_tasks:
                raise Refused(f"node '{node_id}' has running tasks")
            del self._nodes[node_id]
            return self.snapshot()

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            return {
                "clock_ms": self._clock_ms,
                "nodes": [self._nodes[n].to_wire() for n in sorted(self._nodes)],
                "wait_queue": list(self._wait_queue),
            }


def _duration_from_conf(conf: Mapping[str, str]) -> int:
    raw = conf.get("sim.duration_ms")
    if raw is None:
        return DEFAULT_TASK_DURATION_MS
    try:
        duration = int(raw)
    except ValueError:
        raise ValidationFailed(f"sim.duration_ms must be an integer, got '{raw}'") from None
    # a zero duration would complete at its own start tick; clamp so tick(0)
    # is always a no-op
    return max(duration, 1)
