"""Acceptance suite: one test per criterion, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion. Every tolerance is pinned here; nothing is deferred.
"""

import json
import os
import random
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import psutil
import pytest
import requests
from fastapi.testclient import TestClient

from controltower.cli import build_job_run_spec, build_parser
from controltower.cluster import ClusterSim
from controltower.controlplane import ControlPlane
from controltower.environments import EnvironmentRegistry
from controltower.errors import IllegalTransition
from controltower.experiments import ExperimentManager
from controltower.model import (
    LEGAL_TRANSITIONS,
    EnvironmentRef,
    EventKind,
    ExperimentMeta,
    ExperimentSpec,
    ExperimentStatus,
    ExperimentTaskSpec,
    canonical_json,
    spec_canonical_json,
    spec_from_wire,
)
from controltower.resources import (
    ResourceSpec,
    format_resource_string,
    parse_resource_string,
)
from controltower.scheduler import gang_schedule
from controltower.server import CODE_TO_HTTP, ROUTE_TABLE, ServerConfig, create_app
from controltower.submitters import LocalSubmitter
from controltower.templates import TemplateRegistry, TemplateSpec

from conftest import DATA_DIR, make_manager
from oracles import feasible_by_enumeration

PY = sys.executable


def _report(number: int, name: str) -> None:
    print(f"ACCEPTANCE {number} {name}: PASS")


def test_criterion_1_template_golden(mnist_template_doc):
    registry = TemplateRegistry()
    registry.register(TemplateSpec.from_wire(mnist_template_doc))
    spec = registry.instantiate(
        "tf-mnist-template", {"learning_rate": "0.001", "batch_size": "256"}
    )
    assert (
        spec.meta.cmd
        == "python mnist.py --log_dir=/train/log --learning_rate=0.001 --batch_size=256"
    )
    golden = (DATA_DIR / "golden_instantiated_spec.json").read_text()
    assert spec_canonical_json(spec) + "\n" == golden  # byte equality, zero tolerance
    _report(1, "template golden")


def test_criterion_2_cli_fidelity():
    argv = [
        "job", "run",
        "--name", "mnist",
        "--framework", "TensorFlow",
        "--num_workers", "4",
        "--worker_resources", "memory=4G,gpu=4,vcores=4",
        "--num_ps", "1",
        "--ps_resources", "memory=2G,vcores=2",
        "--worker_launch_cmd", "python mnist.py",
        "--ps_launch_cmd", "python mnist.py",
        "--insecure",
        "--conf", "tony.containers.resources=mnist.py",
        "--image", "submarine:tf-mnist",
    ]
    doc = build_job_run_spec(build_parser().parse_args(argv))
    cli_json = canonical_json(doc)

    direct = ExperimentSpec(
        meta=ExperimentMeta(
            name="mnist", namespace="default", framework="TensorFlow", cmd="python mnist.py"
        ),
        environment=EnvironmentRef.inline_image("submarine:tf-mnist"),
        tasks={
            "Ps": ExperimentTaskSpec(replicas=1, resources=ResourceSpec(2, 0, 2048)),
            "Worker": ExperimentTaskSpec(replicas=4, resources=ResourceSpec(4, 4, 4096)),
        },
        conf={"tony.containers.resources": "mnist.py"},
    )
    assert cli_json == spec_canonical_json(direct)  # byte equality
    assert doc["spec"]["Worker"] == {"replicas": 4, "resources": "cpu=4,gpu=4,memory=4096M"}
    assert doc["spec"]["Ps"] == {"replicas": 1, "resources": "cpu=2,gpu=0,memory=2048M"}
    assert cli_json + "\n" == (DATA_DIR / "golden_cli_spec.json").read_text()
    _report(2, "cli fidelity")


def test_criterion_3_resource_grammar_properties():
    start = time.perf_counter()
    rng = random.Random(42)
    for _ in range(1000):
        spec = ResourceSpec(
            vcores=rng.randrange(0, 10**6),
            gpu=rng.randrange(0, 10**4),
            memory_mib=rng.randrange(0, 10**9),
        )
        assert parse_resource_string(format_resource_string(spec)) == spec
        n = rng.randrange(0, 10**6)
        assert parse_resource_string(f"cpu={n}") == parse_resource_string(f"vcores={n}")
        g = rng.randrange(0, 10**4)
        assert (
            parse_resource_string(f"memory={g}G")
            == parse_resource_string(f"memory={g * 1024}M")
            == parse_resource_string(f"memory={g * 1024 * 1024}K")
        )
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"resource property suite took {elapsed:.2f}s (budget 5s)"
    _report(3, f"resource grammar properties ({elapsed:.2f}s)")


def test_criterion_4_state_machine_properties(mnist_spec):
    start = time.perf_counter()
    rng = random.Random(1234)
    manager = make_manager()
    statuses = list(ExperimentStatus)
    terminal_names = {"Succeeded", "Failed", "Killed"}
    for _ in range(10_000):
        record = manager.create(mnist_spec)
        path = [record.status]
        for _ in range(rng.randrange(0, 5)):
            new = rng.choice(statuses)
            if new in LEGAL_TRANSITIONS[record.status]:
                manager.transition(record.id, new, "")
                path.append(new)
            else:
                with pytest.raises(IllegalTransition):
                    manager.transition(record.id, new, "")
        # the accepted sequence is a path in the legal graph
        for current, new in zip(path, path[1:]):
            assert new in LEGAL_TRANSITIONS[current]
        # at most one terminal StatusChange event ever
        terminal_events = [
            e
            for e in record.events
            if e.kind == EventKind.STATUS_CHANGE
            and e.detail.split(" - ")[0] in terminal_names
        ]
        assert len(terminal_events) <= 1
        statuses_from_events = [
            e.detail.split(" - ")[0]
            for e in record.events
            if e.kind == EventKind.STATUS_CHANGE
        ]
        assert statuses_from_events == [s.value for s in path]
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"state-machine suite took {elapsed:.2f}s (budget 10s)"
    _report(4, f"state machine properties ({elapsed:.2f}s)")


def test_criterion_5_gang_scheduler_oracle_equivalence():
    start = time.perf_counter()
    rng = random.Random(777)
    mismatches = 0
    for _ in range(500):
        nodes = {
            f"n{i}": ResourceSpec(
                vcores=rng.randint(0, 8), gpu=rng.randint(0, 8), memory_mib=rng.randint(0, 8)
            )
            for i in range(rng.randint(1, 4))
        }
        instances = [
            (
                f"t-{j}",
                ResourceSpec(
                    vcores=rng.randint(0, 8),
                    gpu=rng.randint(0, 8),
                    memory_mib=rng.randint(0, 8),
                ),
            )
            for j in range(rng.randint(0, 8))
        ]
        placement = gang_schedule(instances, nodes)
        if (placement is not None) != feasible_by_enumeration(instances, nodes):
            mismatches += 1
    elapsed = time.perf_counter() - start
    assert mismatches == 0, f"{mismatches}/500 verdicts disagreed with the oracle"
    assert elapsed < 60.0, f"oracle equivalence took {elapsed:.2f}s (budget 60s)"
    _report(5, f"gang scheduler oracle equivalence 500/500 ({elapsed:.2f}s)")


def test_criterion_6_conservation_atomicity_fifo():
    rng = random.Random(31337)
    manager = make_manager()
    cluster = ClusterSim([(f"n{i}", ResourceSpec(8, 2, 256)) for i in range(3)], manager)
    manager.attach_submitter(cluster)

    def spec_of(step):
        return ExperimentSpec(
            meta=ExperimentMeta(name=f"r-{step}", cmd="simulated"),
            environment=EnvironmentRef.inline_image("example:latest"),
            tasks={
                "Worker": ExperimentTaskSpec(
                    replicas=rng.randint(1, 3),
                    resources=ResourceSpec(
                        rng.randint(0, 6), rng.randint(0, 2), rng.randint(0, 200)
                    ),
                )
            },
            conf={"sim.duration_ms": str(rng.choice([50, 100, 200]))},
        )

    live = []
    fifo: list[str] = []  # ids in enqueue order, pruned as they start or die
    prev_status: dict[str, ExperimentStatus] = {}
    for step in range(1000):
        roll = rng.random()
        if roll < 0.45:
            live.append(manager.create(spec_of(step)))
        elif roll < 0.75:
            cluster.tick(rng.choice([0, 25, 50, 100]))
        elif live:
            victim = rng.choice(live)
            if victim.status in (ExperimentStatus.RUNNING, ExperimentStatus.QUEUED):
                manager.kill(victim.id)

        # FIFO bookkeeping from observed status edges
        for record in live:
            old = prev_status.get(record.id)
            if record.status != old:
                if record.status == ExperimentStatus.QUEUED:
                    fifo.append(record.id)
                elif old == ExperimentStatus.QUEUED:
                    if record.status == ExperimentStatus.RUNNING:
                        assert fifo and fifo[0] == record.id, "FIFO order inverted"
                    fifo.remove(record.id)
                prev_status[record.id] = record.status

        # conservation: node allocations equal the demands of running gangs
        allocated = ResourceSpec()
        for node_doc in cluster.snapshot()["nodes"]:
            allocated = allocated.plus(parse_resource_string(node_doc["allocated"]))
        placed = ResourceSpec()
        for record in live:
            if record.status == ExperimentStatus.RUNNING:
                for task in record.spec.tasks.values():
                    placed = placed.plus(task.resources.scaled(task.replicas))
        assert allocated == placed, f"conservation broken at step {step}"

        # gang atomicity: full placement or none
        for record in live:
            total = sum(t.replicas for t in record.spec.tasks.values())
            if record.status == ExperimentStatus.RUNNING:
                assert record.placement is not None and len(record.placement) == total
    _report(6, "conservation + atomicity + FIFO over 1000 steps")


def test_criterion_7_scheduler_throughput():
    nodes = {f"node-{i:02d}": ResourceSpec(10**9, 10**6, 10**12) for i in range(64)}
    free = dict(nodes)
    count = 5000
    need = ResourceSpec(vcores=1, gpu=0, memory_mib=64)
    start = time.perf_counter()
    for j in range(count):
        placement = gang_schedule([(f"job-{j}", need)], free)
        assert placement is not None
        node_id = placement.assignments[f"job-{j}"]
        free[node_id] = free[node_id].minus(need)
    elapsed = time.perf_counter() - start
    rate = count / elapsed
    assert rate >= 1000, f"scheduler placed {rate:.0f} instances/s (bar: 1000/s)"
    _report(7, f"scheduler throughput {rate:.0f} placements/s on 64 nodes")


def _local_plane(tmp_path):
    manager = make_manager()
    submitter = LocalSubmitter(manager, workdir=tmp_path / "scratch")
    manager.attach_submitter(submitter)
    return manager, submitter


def _local_spec(cmd, replicas=1):
    return ExperimentSpec(
        meta=ExperimentMeta(name="e2e", cmd=cmd),
        environment=EnvironmentRef.inline_image("local:process"),
        tasks={"Worker": ExperimentTaskSpec(replicas=replicas, resources=ResourceSpec(1, 0, 64))},
    )


def test_criterion_8_end_to_end_local(tmp_path):
    # scenario A: 2 replicas succeed, ranks visible in logs
    start = time.perf_counter()
    manager, submitter = _local_plane(tmp_path / "a")
    rank_cmd = f"{PY} -c \"import os; print('RANK', os.environ['RANK'])\""
    record = manager.create(_local_spec(rank_cmd, replicas=2))
    assert submitter.wait(record.id, 25)
    assert record.status == ExperimentStatus.SUCCEEDED
    text = record.logs_text()
    assert "RANK 0" in text and "RANK 1" in text
    assert time.perf_counter() - start < 30

    # scenario B: failing command carries the exit code
    start = time.perf_counter()
    manager, submitter = _local_plane(tmp_path / "b")
    record = manager.create(_local_spec(f'{PY} -c "raise SystemExit(3)"'))
    assert submitter.wait(record.id, 25)
    assert record.status == ExperimentStatus.FAILED
    assert any(
        e.kind == EventKind.ERROR and "code 3" in e.detail for e in record.events
    )
    assert time.perf_counter() - start < 30

    # scenario C: kill during execution, no orphan processes
    start = time.perf_counter()
    manager, submitter = _local_plane(tmp_path / "c")
    record = manager.create(_local_spec(f'{PY} -c "import time; time.sleep(30)"', replicas=2))
    deadline = time.time() + 10
    while manager.get(record.id).status != ExperimentStatus.RUNNING:
        assert time.time() < deadline
        time.sleep(0.02)
    manager.kill(record.id)
    assert submitter.wait(record.id, 25)
    assert record.status == ExperimentStatus.KILLED
    assert submitter.live_process_count() == 0
    lingering = [
        c
        for c in psutil.Process().children(recursive=True)
        if "time.sleep(30)" in " ".join(c.cmdline())
    ]
    assert not lingering, f"orphan processes left: {lingering}"
    assert time.perf_counter() - start < 30
    _report(8, "end-to-end local execution (success / failure / kill)")


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _start_server(store: Path, port: int, token: str) -> subprocess.Popen:
    env = dict(os.environ)
    env.update({"CT_TOKEN": token, "CT_STORE_PATH": str(store), "CT_BACKEND": "local"})
    proc = subprocess.Popen(
        [PY, "-m", "controltower.server", "--port", str(port)],
        env=env,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    headers = {"Authorization": f"Bearer {token}"}
    deadline = time.time() + 20
    while time.time() < deadline:
        try:
            if requests.get(
                f"http://127.0.0.1:{port}/api/v1/experiment", headers=headers, timeout=1
            ).status_code == 200:
                return proc
        except requests.RequestException:
            pass
        assert proc.poll() is None, "server process died during startup"
        time.sleep(0.1)
    proc.kill()
    raise AssertionError("server did not become ready")


def test_criterion_9_persistence_roundtrip(tmp_path, mnist_template_doc):
    token = "acceptance-token"
    headers = {"Authorization": f"Bearer {token}"}
    store = tmp_path / "wal.log"
    port = _free_port()
    base = f"http://127.0.0.1:{port}"

    local_template = {
        "name": "local-noop-template",
        "author": "acceptance",
        "description": "runs a short command",
        "parameters": [{"name": "message", "value": "hi", "required": True}],
        "experimentSpec": {
            "meta": {"cmd": f"{PY} -c \"print('{{{{message}}}}')\"", "namespace": "default"},
            "spec": {"Worker": {"replicas": 1, "resources": "cpu=1,memory=32M"}},
            "environment": {"image": "local:process"},
        },
    }

    proc = _start_server(store, port, token)
    try:
        assert (
            requests.post(f"{base}/api/v1/template", json=local_template, headers=headers).status_code
            == 201
        )
        quick = {
            "meta": {"name": "quick", "cmd": f'{PY} -c "print(42)"'},
            "spec": {"Worker": {"replicas": 1, "resources": "cpu=1"}},
            "environment": {"image": "local:process"},
        }
        r1 = requests.post(f"{base}/api/v1/experiment", json=quick, headers=headers).json()
        r2 = requests.post(
            f"{base}/api/v1/experiment/from-template/local-noop-template",
            json={"params": {"message": "roundtrip"}},
            headers=headers,
        ).json()
        sleeper = {
            "meta": {"name": "sleeper", "cmd": f'{PY} -c "import time; time.sleep(60)"'},
            "spec": {"Worker": {"replicas": 1, "resources": "cpu=1"}},
            "environment": {"image": "local:process"},
        }
        r3 = requests.post(f"{base}/api/v1/experiment", json=sleeper, headers=headers).json()

        def _get(i):
            return requests.get(f"{base}/api/v1/experiment/{i}", headers=headers).json()

        deadline = time.time() + 20
        while time.time() < deadline:
            s1, s2, s3 = _get(r1["id"])["status"], _get(r2["id"])["status"], _get(r3["id"])["status"]
            if s1 == "Succeeded" and s2 == "Succeeded" and s3 == "Running":
                break
            time.sleep(0.1)
        assert _get(r1["id"])["status"] == "Succeeded"
        assert _get(r2["id"])["status"] == "Succeeded"
        assert _get(r3["id"])["status"] == "Running"

        before = {i: canonical_json(_get(i)) for i in (r1["id"], r2["id"], r3["id"])}
        assert json.loads(before[r2["id"]])["template"]["name"] == "local-noop-template"

        proc.send_signal(signal.SIGKILL)
        proc.wait()
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()

    proc = _start_server(store, port, token)
    try:
        after = {
            i: canonical_json(
                requests.get(f"{base}/api/v1/experiment/{i}", headers=headers).json()
            )
            for i in before
        }
        # terminal records are byte-identical
        assert after[r1["id"]] == before[r1["id"]]
        assert after[r2["id"]] == before[r2["id"]]
        # the running record was orphaned to Failed
        orphaned = json.loads(after[r3["id"]])
        assert orphaned["status"] == "Failed"
        assert orphaned["events"][-1]["detail"] == "Failed - orphaned at restart"
        # and everything else about it survived byte-identically
        original = json.loads(before[r3["id"]])
        for key in ("id", "spec", "resolved_image", "created_at", "logs", "metrics"):
            assert canonical_json(orphaned[key]) == canonical_json(original[key])
    finally:
        proc.kill()
        proc.wait()
    _report(9, "persistence round-trip across a SIGKILLed server process")


def test_criterion_10_api_contract(tmp_path, mnist_template_doc):
    token = "contract-token"
    auth = {"Authorization": f"Bearer {token}"}
    plane = ControlPlane(tmp_path / "wal.log", backend="local")
    app = create_app(ServerConfig(token=token), plane)
    client = TestClient(app)
    try:
        # every exposed operation reachable through exactly one route
        app_routes = set()
        for route in app.routes:
            path = getattr(route, "path", "")
            methods = getattr(route, "methods", None)
            if path.startswith("/api/") and methods:
                for method in methods - {"HEAD", "OPTIONS"}:
                    app_routes.add((method, path))
        assert app_routes == {(m, p) for m, p, _ in ROUTE_TABLE}
        assert len({op for _, _, op in ROUTE_TABLE}) == len(ROUTE_TABLE)

        # 401 in secure mode without a token, before any service code
        assert client.get("/api/v1/experiment").status_code == 401

        # error-code table honored, code strings verbatim
        samples = [
            ("GET", "/api/v1/experiment/exp-000000000000", None, 404, "NotFound"),
            ("POST", "/api/v1/experiment", {"meta": {}, "spec": {}, "environment": {}}, 400, "ValidationFailed"),
            ("POST", "/api/v1/experiment/from-template/ghost", {}, 404, "NotFound"),
            ("GET", "/api/v1/cluster", None, 404, "NotFound"),
        ]
        for method, path, body, expected_status, expected_code in samples:
            response = client.request(method, path, json=body, headers=auth)
            assert response.status_code == expected_status, path
            assert response.json()["code"] == expected_code
            assert CODE_TO_HTTP[response.json()["code"]] == expected_status

        # conflict class
        client.post("/api/v1/template", json=mnist_template_doc, headers=auth)
        dup = client.post("/api/v1/template", json=mnist_template_doc, headers=auth)
        assert dup.status_code == 409 and dup.json()["code"] == "Conflict"

        # GETs mutate nothing: store checksum identical before/after
        checksum_before = plane.store.checksum()
        for method, path, _ in ROUTE_TABLE:
            if method != "GET":
                continue
            resolved = (
                path.replace("{experiment_id}", "exp-000000000000")
                .replace("{template_name}", "tf-mnist-template")
                .replace("{environment_name}", "missing")
            )
            client.get(resolved, headers=auth)
        assert plane.store.checksum() == checksum_before
    finally:
        plane.close()
    _report(10, "api contract (routes, errors, auth, read purity)")
