import sys
import time

import psutil
import pytest

from controltower.errors import ResourceSpecUnsupported, UnknownHandle
from controltower.model import (
    EnvironmentRef,
    EventKind,
    ExperimentMeta,
    ExperimentSpec,
    ExperimentStatus,
    ExperimentTaskSpec,
)
from controltower.resources import ResourceSpec
from controltower.submitters import LocalSubmitter, SubmissionHandle

from conftest import make_manager

PY = sys.executable

RANK_ECHO = f'{PY} -c "import os; print(\'rank\', os.environ[\'RANK\'], \'of\', os.environ[\'NUM_WORKERS\'], \'role\', os.environ[\'ROLE\'])"'
EXIT_3 = f'{PY} -c "raise SystemExit(3)"'
SLEEP_LONG = f'{PY} -c "import time; time.sleep(30)"'


def local_spec(cmd, replicas=1, gpu=0, roles=("Worker",), overrides=None):
    tasks = {}
    for role in roles:
        tasks[role] = ExperimentTaskSpec(
            replicas=replicas,
            resources=ResourceSpec(1, gpu, 64),
            launch_cmd_override=(overrides or {}).get(role),
        )
    return ExperimentSpec(
        meta=ExperimentMeta(name="local-job", cmd=cmd),
        environment=EnvironmentRef.inline_image("local:process"),
        tasks=tasks,
    )


@pytest.fixture
def plane(tmp_path):
    manager = make_manager()
    submitter = LocalSubmitter(manager, workdir=tmp_path / "scratch")
    manager.attach_submitter(submitter)
    return manager, submitter


def wait_terminal(manager, submitter, experiment_id, timeout=25):
    assert submitter.wait(experiment_id, timeout), "backend did not finish in time"
    deadline = time.time() + 5
    while time.time() < deadline:
        record = manager.get(experiment_id)
        if record.status in (
            ExperimentStatus.SUCCEEDED,
            ExperimentStatus.FAILED,
            ExperimentStatus.KILLED,
        ):
            return record
        time.sleep(0.05)
    raise AssertionError(f"experiment stuck in {manager.get(experiment_id).status}")


class TestSuccess:
    def test_two_replicas_succeed_with_ranks(self, plane):
        manager, submitter = plane
        record = manager.create(local_spec(RANK_ECHO, replicas=2))
        record = wait_terminal(manager, submitter, record.id)
        assert record.status == ExperimentStatus.SUCCEEDED
        finished = [e for e in record.events if e.kind == EventKind.TASK_FINISHED]
        assert len(finished) == 2
        text = record.logs_text()
        assert "rank 0 of 2 role Worker" in text
        assert "rank 1 of 2 role Worker" in text

    def test_multi_role_overrides(self, plane):
        manager, submitter = plane
        spec = local_spec(
            RANK_ECHO,
            replicas=1,
            roles=("Ps", "Worker"),
            overrides={"Ps": f'{PY} -c "import os; print(\'ps says\', os.environ[\'ROLE\'])"'},
        )
        record = manager.create(spec)
        record = wait_terminal(manager, submitter, record.id)
        assert record.status == ExperimentStatus.SUCCEEDED
        assert "ps says Ps" in record.logs_text()
        assert "role Worker" in record.logs_text()


class TestFailure:
    def test_nonzero_exit_fails_with_code(self, plane):
        manager, submitter = plane
        record = manager.create(local_spec(EXIT_3))
        record = wait_terminal(manager, submitter, record.id)
        assert record.status == ExperimentStatus.FAILED
        errors = [e for e in record.events if e.kind == EventKind.ERROR]
        assert any("exit" in e.detail and "3" in e.detail for e in errors)

    def test_first_failure_stops_the_gang(self, plane):
        manager, submitter = plane
        spec = local_spec(
            SLEEP_LONG,
            roles=("Worker", "Canary"),
            overrides={"Canary": EXIT_3},
        )
        record = manager.create(spec)
        record = wait_terminal(manager, submitter, record.id)
        assert record.status == ExperimentStatus.FAILED
        assert submitter.live_process_count() == 0

    def test_command_not_found(self, plane):
        manager, submitter = plane
        record = manager.create(local_spec("definitely-not-a-binary --flag"))
        record = wait_terminal(manager, submitter, record.id)
        assert record.status == ExperimentStatus.FAILED
        assert any(
            e.kind == EventKind.ERROR and "spawn failure" in e.detail for e in record.events
        )

    def test_empty_command(self, plane):
        manager, submitter = plane
        record = manager.create(local_spec(""))
        record = wait_terminal(manager, submitter, record.id)
        assert record.status == ExperimentStatus.FAILED


class TestRejections:
    def test_gpu_unsupported_direct(self, tmp_path):
        bare_manager = make_manager()  # no submitter: records stay Accepted
        record = bare_manager.create(local_spec(RANK_ECHO, gpu=4))
        submitter = LocalSubmitter(bare_manager, workdir=tmp_path)
        with pytest.raises(ResourceSpecUnsupported):
            submitter.submit(record)

    def test_gpu_unsupported_fails_record(self, plane):
        manager, submitter = plane
        record = manager.create(local_spec(RANK_ECHO, gpu=4))
        # manager catches the submit error and fails the record
        assert record.status == ExperimentStatus.FAILED
        assert "ResourceSpecUnsupported" in record.events[-1].detail

    def test_replica_cap(self, tmp_path):
        manager = make_manager()
        submitter = LocalSubmitter(manager, workdir=tmp_path, max_total_replicas=2)
        manager.attach_submitter(submitter)
        record = manager.create(local_spec(RANK_ECHO, replicas=3))
        assert record.status == ExperimentStatus.FAILED


class TestKill:
    def test_kill_reaps_processes(self, plane):
        manager, submitter = plane
        record = manager.create(local_spec(SLEEP_LONG, replicas=2))
        deadline = time.time() + 10
        while manager.get(record.id).status != ExperimentStatus.RUNNING:
            assert time.time() < deadline
            time.sleep(0.02)
        assert submitter.live_process_count() == 2
        manager.kill(record.id)
        assert submitter.wait(record.id, 15)
        assert manager.get(record.id).status == ExperimentStatus.KILLED
        assert submitter.live_process_count() == 0
        # nothing lingers in the process table
        children = psutil.Process().children(recursive=True)
        assert not any("time.sleep(30)" in " ".join(c.cmdline()) for c in children)


class TestPoll:
    def test_poll_exited_all_zero(self, plane):
        manager, submitter = plane
        record = manager.create(local_spec(RANK_ECHO, replicas=2))
        wait_terminal(manager, submitter, record.id)
        view = submitter.poll(
            SubmissionHandle(experiment_id=record.id, backend="local", token=record.id)
        )
        assert view.state == "Exited"
        assert set(view.exit_codes.values()) == {0}

    def test_poll_stale_handle(self, plane):
        _, submitter = plane
        with pytest.raises(UnknownHandle):
            submitter.poll(SubmissionHandle(experiment_id="x", backend="local", token="stale"))
