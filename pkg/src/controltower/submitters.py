"""Local process backend: runs every task replica as an OS child process.

Each replica gets the contract env vars EXPERIMENT_ID, ROLE, RANK (0-based
within its role) and NUM_WORKERS (the role's replica count), runs in a
per-experiment scratch directory, and has stdout+stderr captured
line-buffered into the experiment's per-task log. Gang semantics on
failure: the first nonzero exit stops the rest and fails the experiment.
"""

from __future__ import annotations

import os
import queue
import shlex
import shutil
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping

from .errors import ResourceSpecUnsupported, UnknownHandle
from .experiments import ExperimentManager, ExperimentRecord, Submitter
from .model import EventKind, ExperimentStatus

DEFAULT_REPLICA_CAP = 16
_STOP_GRACE_S = 2.0


@dataclass(frozen=True)
class SubmissionHandle:
    experiment_id: str
    backend: str
    token: str


@dataclass(frozen=True)
class BackendView:
    """A backend's own view of an execution, independent of the record."""

    state: str  # Pending | Running | Exited
    exit_codes: Mapping[str, int] | None = None  # instance -> code once exited


@dataclass
class _LocalRun:
    record_id: str
    processes: dict[str, subprocess.Popen] = field(default_factory=dict)
    exit_codes: dict[str, int] = field(default_factory=dict)
    stopping: bool = False
    done: threading.Event = field(default_factory=threading.Event)
    threads: list[threading.Thread] = field(default_factory=list)


class LocalSubmitter(Submitter):
    backend = "local"

    def __init__(
        self,
        manager: ExperimentManager,
        *,
        max_total_replicas: int = DEFAULT_REPLICA_CAP,
        workdir: str | os.PathLike[str] | None = None,
    ):
        self._manager = manager
        self._cap = max_total_replicas
        self._workdir = Path(workdir) if workdir is not None else None
        self._lock = threading.Lock()
        self._runs: dict[str, _LocalRun] = {}

    def submit(self, record: ExperimentRecord) -> SubmissionHandle:
        total_replicas = 0
        for role, task in record.spec.tasks.items():
            if task.resources.gpu > 0:
                raise ResourceSpecUnsupported(
                    f"local backend cannot honor gpu={task.resources.gpu} for role '{role}'"
                )
            total_replicas += task.replicas
        if total_replicas > self._cap:
            raise ResourceSpecUnsupported(
                f"{total_replicas} replicas exceed the local cap of {self._cap}"
            )

        run = _LocalRun(record_id=record.id)
        with self._lock:
            self._runs[record.id] = run
        launcher = threading.Thread(
            target=self._execute, args=(record, run), name=f"local-{record.id}", daemon=True
        )
        run.threads.append(launcher)
        launcher.start()
        return SubmissionHandle(experiment_id=record.id, backend=self.backend, token=record.id)

    def stop(self, experiment_id: str) -> None:
        with self._lock:
            run = self._runs.get(experiment_id)
        if run is None:
            return
        run.stopping = True
        self._terminate_all(run)

    def poll(self, handle: SubmissionHandle) -> BackendView:
        with self._lock:
            run = self._runs.get(handle.token)
        if run is None:
            raise UnknownHandle(f"no local run for handle '{handle.token}'")
        if run.done.is_set():
            return BackendView(state="Exited", exit_codes=dict(run.exit_codes))
        if not run.processes:
            return BackendView(state="Pending")
        return BackendView(state="Running")

    def wait(self, experiment_id: str, timeout: float | None = None) -> bool:
        """Block until the run reaches its terminal report. Test helper."""
        with self._lock:
            run = self._runs.get(experiment_id)
        if run is None:
            return True
        return run.done.wait(timeout)

    def live_process_count(self) -> int:
        with self._lock:
            runs = list(self._runs.values())
        return sum(
            1 for run in runs for p in run.processes.values() if p.poll() is None
        )

    # -- execution ----------------------------------------------------------

    def _scratch_dir(self, experiment_id: str) -> Path:
        base = self._workdir if self._workdir is not None else Path(os.getcwd()) / "scratch"
        path = base / experiment_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _execute(self, record: ExperimentRecord, run: _LocalRun) -> None:
        scratch = self._scratch_dir(record.id)
        spawned: list[tuple[str, subprocess.Popen]] = []
        try:
            for role, task in record.spec.tasks.items():
                cmd = task.launch_cmd_override or record.spec.meta.cmd
                argv = shlex.split(cmd) if cmd else []
                for rank in range(task.replicas):
                    instance = f"{role}-{rank}"
                    if not argv:
                        raise FileNotFoundError(f"empty launch command for {instance}")
                    env = dict(os.environ)
                    env.update(
                        {
                            "EXPERIMENT_ID": record.id,
                            "ROLE": role,
                            "RANK": str(rank),
                            "NUM_WORKERS": str(task.replicas),
                            # children write to pipes; without this, long-lived
                            # python tasks buffer their logs until exit
                            "PYTHONUNBUFFERED": "1",
                        }
                    )
                    proc = subprocess.Popen(
                        argv,
                        cwd=scratch,
                        env=env,
                        stdout=subprocess.PIPE,
                        stderr=subprocess.STDOUT,
                        text=True,
                        bufsize=1,
                    )
                    spawned.append((instance, proc))
        except (FileNotFoundError, OSError, ValueError) as exc:
            for _, proc in spawned:
                proc.kill()
            for _, proc in spawned:
                proc.wait()
            self._manager.append_event(record.id, EventKind.ERROR, f"spawn failure: {exc}")
            self._manager.try_transition(
                record.id, ExperimentStatus.FAILED, f"SpawnFailure: {exc}"
            )
            run.done.set()
            return

        with self._lock:
            run.processes = dict(spawned)
        if run.stopping:  # kill raced the spawn
            self._terminate_all(run)

        self._manager.try_transition(record.id, ExperimentStatus.RUNNING, "processes spawned")
        for instance, _ in spawned:
            self._manager.append_event(record.id, EventKind.TASK_STARTED, instance)

        readers = []
        for instance, proc in spawned:
            t = threading.Thread(
                target=self._pump_output,
                args=(record.id, instance, proc.stdout),
                name=f"log-{record.id}-{instance}",
                daemon=True,
            )
            t.start()
            readers.append(t)
        run.threads.extend(readers)

        failed_with: tuple[str, int] | None = None
        exited: queue.Queue[tuple[str, int]] = queue.Queue()

        def _wait_one(instance: str, proc: subprocess.Popen) -> None:
            exited.put((instance, proc.wait()))

        waiters = []
        for instance, proc in spawned:
            t = threading.Thread(target=_wait_one, args=(instance, proc), daemon=True)
            t.start()
            waiters.append(t)
        run.threads.extend(waiters)

        for _ in range(len(spawned)):
            instance, code = exited.get()
            run.exit_codes[instance] = code
            if run.stopping:
                continue
            if code == 0:
                self._manager.append_event(
                    record.id, EventKind.TASK_FINISHED, f"{instance} exited with code 0"
                )
            elif failed_with is None:
                failed_with = (instance, code)
                self._manager.append_event(
                    record.id, EventKind.ERROR, f"{instance} exited with code {code}"
                )
                self._terminate_all(run)  # a partial gang is worthless

        for t in readers:
            t.join()

        if run.stopping:
            pass  # the kill path owns the terminal status
        elif failed_with is None:
            self._manager.try_transition(
                record.id, ExperimentStatus.SUCCEEDED, "all tasks exited 0"
            )
        else:
            instance, code = failed_with
            self._manager.try_transition(
                record.id, ExperimentStatus.FAILED, f"{instance} exited with code {code}"
            )
        run.done.set()

    def _pump_output(self, experiment_id: str, instance: str, stream: IO[str] | None) -> None:
        if stream is None:
            return
        with stream:
            for line in stream:
                self._manager.append_log(experiment_id, instance, line.rstrip("\n"))

    def _terminate_all(self, run: _LocalRun) -> None:
        procs = list(run.processes.values())
        for proc in procs:
            if proc.poll() is None:
                proc.terminate()
        for proc in procs:
            if proc.poll() is None:
                try:
                    proc.wait(timeout=_STOP_GRACE_S)
                except subprocess.TimeoutExpired:
                    proc.kill()
                    proc.wait()

    def cleanup_scratch(self, experiment_id: str) -> None:
        scratch = self._scratch_dir(experiment_id)
        shutil.rmtree(scratch, ignore_errors=True)
