"""Run an experiment end to end on the local process backend, in process.

No server needed: this drives the manager and submitter directly, which is
also the fastest way to see the record anatomy (status path, events, logs).

    python3 demos/local_workflow.py
"""

import sys
import tempfile
from pathlib import Path

from controltower.environments import EnvironmentRegistry
from controltower.experiments import ExperimentManager
from controltower.model import (
    EnvironmentRef,
    ExperimentMeta,
    ExperimentSpec,
    ExperimentTaskSpec,
    canonical_json,
)
from controltower.resources import ResourceSpec
from controltower.submitters import LocalSubmitter
from controltower.templates import TemplateRegistry

workdir = Path(tempfile.mkdtemp(prefix="ct-demo-"))
environments = EnvironmentRegistry()
templates = TemplateRegistry()
manager = ExperimentManager(None, environments, templates)
submitter = LocalSubmitter(manager, workdir=workdir)
manager.attach_submitter(submitter)

# Two replicas of a command that reports its identity via the task contract
# env vars (EXPERIMENT_ID, ROLE, RANK, NUM_WORKERS).
spec = ExperimentSpec(
    meta=ExperimentMeta(
        name="hello-distributed",
        cmd=f"{sys.executable} -c \"import os; print('hello from', os.environ['ROLE'], os.environ['RANK'], 'of', os.environ['NUM_WORKERS'])\"",
    ),
    environment=EnvironmentRef.inline_image("local:process"),
    tasks={"Worker": ExperimentTaskSpec(replicas=2, resources=ResourceSpec(vcores=1, memory_mib=64))},
)

record = manager.create(spec)
print(f"submitted {record.id} -> {record.status.value}")

submitter.wait(record.id, timeout=20)
print(f"finished  {record.id} -> {record.status.value}\n")

print("event log:")
for event in record.events:
    print(f"  [{event.timestamp}] {event.kind.value:13s} {event.detail}")

print("\ncaptured logs:")
print(record.logs_text())

print("full record as the API would return it:")
print(canonical_json(record.to_wire()))
