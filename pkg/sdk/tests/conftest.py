import os
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest
import requests

TOKEN = "sdk-test-token"


@pytest.fixture(scope="session")
def live_server(tmp_path_factory):
    """A real server process; the SDK talks to it over HTTP only."""
    store = tmp_path_factory.mktemp("sdk-store") / "ct.wal"
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    base = f"http://127.0.0.1:{port}"
    env = dict(os.environ)
    env.update({"CT_TOKEN": TOKEN, "CT_STORE_PATH": str(store), "CT_BACKEND": "local"})
    proc = subprocess.Popen(
        [sys.executable, "-m", "controltower.server", "--port", str(port)],
        env=env,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    headers = {"Authorization": f"Bearer {TOKEN}"}
    deadline = time.time() + 20
    try:
        while True:
            try:
                if requests.get(f"{base}/api/v1/experiment", headers=headers, timeout=1).status_code == 200:
                    break
            except requests.RequestException:
                pass
            if time.time() > deadline or proc.poll() is not None:
                raise RuntimeError("server did not come up")
            time.sleep(0.1)
        yield base
    finally:
        proc.kill()
        proc.wait()


@pytest.fixture
def client(live_server):
    import ctsdk

    return ctsdk.ExperimentClient(server=live_server, token=TOKEN)


@pytest.fixture
def golden_dir():
    return Path(__file__).resolve().parents[2] / "tests" / "data"
