"""REST surface: one route per service operation, token auth in front.

The code → HTTP table is total: every ServiceError code maps to a fixed
status, the code string travels verbatim as ``code`` in the error body, and
anything unexpected is a 500. Authentication (static bearer token, or
insecure mode) runs before any service code.
"""

from __future__ import annotations

import argparse
import hmac
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import __version__
from .controlplane import ControlPlane
from .environments import EnvironmentSpec, parse_environment_yaml
from .errors import BadRequest, NotFound, ServiceError, ValidationFailed
from .experiments import ExperimentManager
from .model import EventKind, metric_from_wire, spec_from_wire
from .resources import parse_resource_string
from .templates import TemplateSpec

CODE_TO_HTTP = {
    # validation / parse
    "ValidationFailed": 400,
    "EmptySpec": 400,
    "UnknownKey": 400,
    "MalformedPair": 400,
    "UnknownUnit": 400,
    "NegativeValue": 400,
    "DuplicateKey": 400,
    "ArithmeticOverflow": 400,
    "YamlSyntax": 400,
    "MissingField": 400,
    "UnknownField": 400,
    "MissingRequiredParameter": 400,
    "UnknownParameter": 400,
    "ResultInvalid": 400,
    "NonFiniteMetric": 400,
    "ResourceSpecUnsupported": 400,
    "BadRequest": 400,
    # auth
    "Unauthenticated": 401,
    # missing entities
    "NotFound": 404,
    "EnvironmentNotFound": 404,
    "UnknownHandle": 404,
    # state conflicts
    "Conflict": 409,
    "IllegalTransition": 409,
    "AlreadyTerminal": 409,
    "InUse": 409,
    "Refused": 409,
    "DuplicateNodeId": 409,
    # infrastructure
    "BackendUnavailable": 500,
    "SpawnFailure": 500,
    "StoreCorrupt": 500,
    "Internal": 500,
}

# The documented API surface: exactly one (method, path) per exposed operation.
ROUTE_TABLE: list[tuple[str, str, str]] = [
    ("POST", "/api/v1/experiment", "create_experiment"),
    ("GET", "/api/v1/experiment", "list_experiments"),
    ("GET", "/api/v1/experiment/{experiment_id}", "get_experiment"),
    ("GET", "/api/v1/experiment/{experiment_id}/logs", "get_experiment_logs"),
    ("POST", "/api/v1/experiment/{experiment_id}/kill", "kill_experiment"),
    ("POST", "/api/v1/experiment/{experiment_id}/telemetry", "append_telemetry"),
    ("POST", "/api/v1/experiment/from-template/{template_name}", "create_from_template"),
    ("POST", "/api/v1/template", "register_template"),
    ("GET", "/api/v1/template", "list_templates"),
    ("GET", "/api/v1/template/{template_name}", "get_template"),
    ("DELETE", "/api/v1/template/{template_name}", "delete_template"),
    ("POST", "/api/v1/environment", "register_environment"),
    ("GET", "/api/v1/environment", "list_environments"),
    ("GET", "/api/v1/environment/{environment_name}", "get_environment"),
    ("DELETE", "/api/v1/environment/{environment_name}", "delete_environment"),
    ("GET", "/api/v1/cluster", "cluster_snapshot"),
    ("POST", "/api/v1/cluster", "cluster_admin"),
]


@dataclass
class ServerConfig:
    store_path: str | None = None
    token: str | None = None
    insecure: bool = False
    backend: str = "local"
    cluster_config_path: str | None = None
    ui_dir: str | None = None
    autotick_ms: int = 0  # >0: advance the sim clock from wall time

    @classmethod
    def from_env(cls) -> "ServerConfig":
        return cls(
            store_path=os.environ.get("CT_STORE_PATH"),
            token=os.environ.get("CT_TOKEN"),
            insecure=os.environ.get("CT_INSECURE", "") == "1",
            backend=os.environ.get("CT_BACKEND", "local"),
            cluster_config_path=os.environ.get("CT_CLUSTER_CONFIG"),
            ui_dir=os.environ.get("CT_UI_DIR"),
            autotick_ms=int(os.environ.get("CT_SIM_AUTOTICK_MS", "0")),
        )


def _error_response(exc: ServiceError) -> JSONResponse:
    status = CODE_TO_HTTP.get(exc.code, 500)
    body: dict[str, Any] = {"code": exc.code, "message": exc.message}
    if exc.details is not None:
        body["details"] = exc.details
    return JSONResponse(status_code=status, content=body)


async def _read_json(request: Request) -> Any:
    raw = await request.body()
    if not raw:
        return {}
    try:
        return json.loads(raw)
    except ValueError as exc:
        raise BadRequest(f"request body is not valid JSON: {exc}") from exc


def create_app(config: ServerConfig, plane: ControlPlane | None = None) -> FastAPI:
    if not config.insecure and not config.token:
        raise ValidationFailed("secure mode requires a token (set CT_TOKEN or CT_INSECURE=1)")
    if plane is None:
        plane = ControlPlane(
            config.store_path,
            backend=config.backend,
            cluster_config_path=config.cluster_config_path,
        )
    manager: ExperimentManager = plane.manager

    app = FastAPI(title="controltower", version=__version__, docs_url=None, redoc_url=None)
    app.state.plane = plane
    app.state.config = config

    @app.middleware("http")
    async def _authenticate(request: Request, call_next):
        if request.url.path.startswith("/api/") and not config.insecure:
            header = request.headers.get("authorization", "")
            expected = f"Bearer {config.token}"
            if not hmac.compare_digest(header.encode(), expected.encode()):
                return JSONResponse(
                    status_code=401,
                    content={"code": "Unauthenticated", "message": "missing or bad token"},
                )
        return await call_next(request)

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError) -> JSONResponse:
        return _error_response(exc)

    # -- experiments -------------------------------------------------------

    @app.post("/api/v1/experiment", status_code=201)
    async def create_experiment(request: Request) -> Any:
        spec = spec_from_wire(await _read_json(request))
        return manager.create(spec).to_wire()

    @app.get("/api/v1/experiment")
    async def list_experiments(namespace: str | None = None, limit: int | None = None) -> Any:
        return {"experiments": manager.list(namespace=namespace, limit=limit)}

    @app.get("/api/v1/experiment/{experiment_id}")
    async def get_experiment(experiment_id: str) -> Any:
        return manager.get(experiment_id).to_wire()

    @app.get("/api/v1/experiment/{experiment_id}/logs")
    async def get_experiment_logs(experiment_id: str) -> Response:
        return PlainTextResponse(manager.get(experiment_id).logs_text())

    @app.post("/api/v1/experiment/{experiment_id}/kill")
    async def kill_experiment(experiment_id: str) -> Any:
        return manager.kill(experiment_id).to_wire()

    @app.post("/api/v1/experiment/{experiment_id}/telemetry")
    async def append_telemetry(experiment_id: str, request: Request) -> Any:
        body = await _read_json(request)
        if not isinstance(body, dict):
            raise BadRequest("telemetry body must be an object")
        accepted = 0
        for doc in body.get("events", []):
            kind = EventKind(doc.get("kind", EventKind.LOG_LINE.value))
            manager.append_event(experiment_id, kind, str(doc.get("detail", "")))
            accepted += 1
        for doc in body.get("metrics", []):
            manager.append_metric(experiment_id, metric_from_wire(doc))
            accepted += 1
        for doc in body.get("logs", []):
            manager.append_log(experiment_id, str(doc.get("task", "")), str(doc.get("line", "")))
            accepted += 1
        return {"accepted": accepted}

    @app.post("/api/v1/experiment/from-template/{template_name}", status_code=201)
    async def create_from_template(template_name: str, request: Request) -> Any:
        body = await _read_json(request)
        if not isinstance(body, dict):
            raise BadRequest("parameter payload must be an object")
        params = body.get("params", body)
        if not isinstance(params, dict):
            raise BadRequest("'params' must be an object")
        params = {str(k): str(v) for k, v in params.items()}
        return manager.create_from_template(template_name, params).to_wire()

    # -- templates ------------------------------------------------------------

    @app.post("/api/v1/template", status_code=201)
    async def register_template(request: Request) -> Any:
        template = TemplateSpec.from_wire(await _read_json(request))
        return plane.templates.register(template).to_wire()

    @app.get("/api/v1/template")
    async def list_templates() -> Any:
        return {
            "templates": [
                {"name": t.name, "description": t.description} for t in plane.templates.list()
            ]
        }

    @app.get("/api/v1/template/{template_name}")
    async def get_template(template_name: str) -> Any:
        return plane.templates.get(template_name).to_wire()

    @app.delete("/api/v1/template/{template_name}")
    async def delete_template(template_name: str) -> Any:
        plane.templates.delete(template_name)
        return {"deleted": template_name}

    # -- environments ------------------------------------------------------------

    @app.post("/api/v1/environment", status_code=201)
    async def register_environment(request: Request) -> Any:
        content_type = request.headers.get("content-type", "")
        if "yaml" in content_type:
            spec = parse_environment_yaml((await request.body()).decode("utf-8"))
        else:
            spec = EnvironmentSpec.from_wire(await _read_json(request))
        return plane.environments.register(spec).to_wire()

    @app.get("/api/v1/environment")
    async def list_environments() -> Any:
        return {"environments": [e.to_wire() for e in plane.environments.list()]}

    @app.get("/api/v1/environment/{environment_name}")
    async def get_environment(environment_name: str) -> Any:
        return plane.environments.get(environment_name).to_wire()

    @app.delete("/api/v1/environment/{environment_name}")
    async def delete_environment(environment_name: str) -> Any:
        plane.environments.delete(environment_name)
        return {"deleted": environment_name}

    # -- cluster ---------------------------------------------------------------------

    def _cluster():
        if plane.cluster is None:
            raise NotFound("no simulated cluster on this server (backend is local)")
        return plane.cluster

    @app.get("/api/v1/cluster")
    async def cluster_snapshot() -> Any:
        return _cluster().snapshot()

    @app.post("/api/v1/cluster")
    async def cluster_admin(request: Request) -> Any:
        body = await _read_json(request)
        if not isinstance(body, dict):
            raise BadRequest("cluster admin payload must be an object")
        action = body.get("action")
        cluster = _cluster()
        if action == "add_node":
            return cluster.add_node(
                str(body.get("id", "")), parse_resource_string(str(body.get("resources", "")))
            )
        if action == "remove_node":
            return cluster.remove_node(str(body.get("id", "")))
        if action == "tick":
            cluster.tick(int(body.get("dt_ms", 0)))
            return cluster.snapshot()
        if action == "snapshot":
            return cluster.snapshot()
        raise BadRequest(f"unknown cluster action '{action}'")

    # -- workbench bundle --------------------------------------------------------------

    ui_dir = config.ui_dir or str(Path(__file__).resolve().parents[2] / "frontend" / "dist")
    if Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    if config.autotick_ms > 0 and plane.cluster is not None:
        _start_autoticker(plane, config.autotick_ms)

    return app


def _start_autoticker(plane: ControlPlane, interval_ms: int) -> None:
    """Optional wall-clock ticker for live demos; off by default because the
    simulation is otherwise free of real-time dependence."""

    def _run() -> None:
        assert plane.cluster is not None
        while True:
            time.sleep(interval_ms / 1000)
            plane.cluster.tick(interval_ms)

    threading.Thread(target=_run, name="sim-autotick", daemon=True).start()


def main(argv: list[str] | None = None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="ct-server", description="experiment control plane")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--store", help="write-ahead store path (or CT_STORE_PATH)")
    parser.add_argument("--backend", choices=["local", "simulated"], help="or CT_BACKEND")
    parser.add_argument("--cluster-config", help="cluster YAML (or CT_CLUSTER_CONFIG)")
    parser.add_argument("--insecure", action="store_true", help="disable auth (or CT_INSECURE=1)")
    parser.add_argument("--ui-dir", help="workbench bundle directory (or CT_UI_DIR)")
    args = parser.parse_args(argv)

    config = ServerConfig.from_env()
    if args.store:
        config.store_path = args.store
    if args.backend:
        config.backend = args.backend
    if args.cluster_config:
        config.cluster_config_path = args.cluster_config
    if args.insecure:
        config.insecure = True
    if args.ui_dir:
        config.ui_dir = args.ui_dir
    if config.store_path is None:
        config.store_path = "controltower.wal"

    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
