"""Gang scheduling on the simulated cluster: placement, queueing, FIFO drain.

Three experiments compete for two 4-GPU nodes. The first two gangs fit; the
third waits in the FIFO queue until a tick releases capacity. Time is fully
simulated: nothing here depends on the wall clock.

    python3 demos/simulated_cluster.py
"""

from controltower.cluster import ClusterSim
from controltower.environments import EnvironmentRegistry
from controltower.experiments import ExperimentManager
from controltower.model import (
    EnvironmentRef,
    ExperimentMeta,
    ExperimentSpec,
    ExperimentTaskSpec,
)
from controltower.resources import ResourceSpec
from controltower.templates import TemplateRegistry

manager = ExperimentManager(None, EnvironmentRegistry(), TemplateRegistry())
cluster = ClusterSim(
    [
        ("gpu-node-0", ResourceSpec(vcores=16, gpu=4, memory_mib=32768)),
        ("gpu-node-1", ResourceSpec(vcores=16, gpu=4, memory_mib=32768)),
    ],
    manager,
)
manager.attach_submitter(cluster)


def gang(name, gpus_per_task, replicas, duration_ms):
    return ExperimentSpec(
        meta=ExperimentMeta(name=name, cmd="train"),
        environment=EnvironmentRef.inline_image("example:gpu"),
        tasks={
            "Worker": ExperimentTaskSpec(
                replicas=replicas,
                resources=ResourceSpec(vcores=4, gpu=gpus_per_task, memory_mib=8192),
            )
        },
        conf={"sim.duration_ms": str(duration_ms)},
    )


def show(label):
    snapshot = cluster.snapshot()
    print(f"\n# {label} (clock {snapshot['clock_ms']} ms)")
    for node in snapshot["nodes"]:
        print(f"  {node['node_id']}: allocated {node['allocated']}  tasks {node['running_tasks']}")
    print(f"  wait queue: {snapshot['wait_queue']}")


a = manager.create(gang("whole-node-a", gpus_per_task=4, replicas=1, duration_ms=1000))
b = manager.create(gang("whole-node-b", gpus_per_task=4, replicas=1, duration_ms=2000))
c = manager.create(gang("waits-its-turn", gpus_per_task=2, replicas=2, duration_ms=500))
print(f"{a.spec.meta.name}: {a.status.value}")
print(f"{b.spec.meta.name}: {b.status.value}")
print(f"{c.spec.meta.name}: {c.status.value}  <- queued, cluster is full")
show("after submissions")

cluster.tick(1000)  # first gang completes; the queue head takes its place
print(f"\nafter 1000 ms: {a.spec.meta.name} -> {a.status.value}, "
      f"{c.spec.meta.name} -> {c.status.value}")
show("after first completion")

cluster.tick(1000)
show("after everything drains")
for record in (a, b, c):
    print(f"{record.spec.meta.name}: {record.status.value}, placement {record.placement}")
