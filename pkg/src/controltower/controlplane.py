"""Assembly of one control plane: store, registries, manager, backend.

Opening a control plane replays the write-ahead store into fresh service
state, then fails any experiment that was live when the previous process
died (submitters hold no durable handles, so nothing can still be running).
"""

from __future__ import annotations

import os
from pathlib import Path

from .cluster import ClusterSim, parse_cluster_config
from .environments import EnvironmentRegistry
from .errors import BackendUnavailable
from .experiments import ExperimentManager, replay_into
from .resources import ResourceSpec
from .store import WalStore
from .submitters import LocalSubmitter
from .templates import TemplateRegistry

DEFAULT_SIM_NODES = [(f"node-{i}", ResourceSpec(vcores=16, gpu=4, memory_mib=32768)) for i in range(4)]


class ControlPlane:
    def __init__(
        self,
        store_path: str | os.PathLike[str] | None,
        *,
        backend: str = "local",
        cluster_config_path: str | os.PathLike[str] | None = None,
        fsync: bool = True,
        max_local_replicas: int = 16,
    ):
        self.store = WalStore(store_path, fsync=fsync) if store_path is not None else None
        self.environments = EnvironmentRegistry(self.store)
        self.templates = TemplateRegistry(self.store)
        self.manager = ExperimentManager(self.store, self.environments, self.templates)
        if self.store is not None:
            replay_into(self.store, self.manager, self.templates, self.environments)
        self.orphaned = self.manager.orphan_sweep()

        self.cluster: ClusterSim | None = None
        if backend == "local":
            workdir = (
                Path(store_path).parent / "scratch" if store_path is not None else None
            )
            self.submitter = LocalSubmitter(
                self.manager, workdir=workdir, max_total_replicas=max_local_replicas
            )
        elif backend == "simulated":
            if cluster_config_path is not None:
                nodes = parse_cluster_config(Path(cluster_config_path).read_text())
            else:
                nodes = list(DEFAULT_SIM_NODES)
            self.cluster = ClusterSim(nodes, self.manager)
            self.submitter = self.cluster
        else:
            raise BackendUnavailable(f"unknown backend '{backend}'")
        self.manager.attach_submitter(self.submitter)

    def close(self) -> None:
        if self.store is not None:
            self.store.close()

    def __enter__(self) -> "ControlPlane":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
