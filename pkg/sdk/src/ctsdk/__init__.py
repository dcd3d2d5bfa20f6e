"""Thin typed client for the experiment control plane.

Spec construction mirrors the server's wire layout one to one::

    client = ctsdk.ExperimentClient()
    environment = EnvironmentSpec(image='example:tf')
    meta = ExperimentMeta(name='mnist', namespace='default',
                          framework='TensorFlow', cmd='python mnist.py')
    worker = ExperimentTaskSpec(resources='cpu=4, memory=4G, replicas=4')
    spec = ExperimentSpec(meta=meta, environment=environment,
                          spec={'Worker': worker})
    record = client.create(spec)

Resource strings are passed through verbatim; the server is the single
parsing authority. Configuration comes from CT_SERVER / CT_TOKEN when not
given explicitly.
"""

from __future__ import annotations

import json
import os
from typing import Any, Mapping

import requests

__version__ = "0.1.0"

DEFAULT_SERVER = "http://127.0.0.1:8000"


class ApiError(Exception):
    """Structured failure from the API: carries the server's code verbatim."""

    def __init__(self, status: int, code: str, message: str, details: Any = None):
        super().__init__(f"{code}: {message}")
        self.status = status
        self.code = code
        self.message = message
        self.details = details


class EnvironmentSpec:
    """Environment reference: an inline image or a registered name."""

    def __init__(self, image: str | None = None, name: str | None = None):
        self.image = image
        self.name = name

    def to_wire(self) -> dict[str, Any]:
        doc: dict[str, Any] = {}
        if self.name:
            doc["name"] = self.name
        if self.image:
            doc["image"] = self.image
        return doc


class ExperimentMeta:
    def __init__(self, name: str, namespace: str = "default", framework: str = "",
                 cmd: str = ""):
        self.name = name
        self.namespace = namespace
        self.framework = framework
        self.cmd = cmd

    def to_wire(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "namespace": self.namespace,
            "framework": self.framework,
            "cmd": self.cmd,
        }


class ExperimentTaskSpec:
    """One task role. `resources` may carry an inline `replicas=N` pair,
    in which case the explicit replicas argument can be omitted."""

    def __init__(self, resources: str, replicas: int | None = None,
                 launch_cmd_override: str | None = None):
        self.resources = resources
        self.replicas = replicas
        self.launch_cmd_override = launch_cmd_override

    def to_wire(self) -> dict[str, Any]:
        doc: dict[str, Any] = {}
        if self.replicas is not None:
            doc["replicas"] = self.replicas
        doc["resources"] = self.resources
        if self.launch_cmd_override is not None:
            doc["launch_cmd_override"] = self.launch_cmd_override
        return doc


class ExperimentSpec:
    def __init__(
        self,
        meta: ExperimentMeta,
        environment: EnvironmentSpec,
        spec: Mapping[str, ExperimentTaskSpec],
        conf: Mapping[str, str] | None = None,
    ):
        self.meta = meta
        self.environment = environment
        self.spec = dict(spec)
        self.conf = dict(conf) if conf else {}

    def to_wire(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "meta": self.meta.to_wire(),
            "spec": {role: task.to_wire() for role, task in self.spec.items()},
            "environment": self.environment.to_wire(),
        }
        if self.conf:
            doc["conf"] = self.conf
        return doc

    def to_json(self) -> str:
        """Same rendering the server uses for canonical serialization."""
        return json.dumps(self.to_wire(), indent=2, ensure_ascii=False)


class ExperimentClient:
    def __init__(self, server: str | None = None, token: str | None = None,
                 insecure: bool = False, timeout: float = 60.0):
        self.server = (server or os.environ.get("CT_SERVER", DEFAULT_SERVER)).rstrip("/")
        self.token = token or os.environ.get("CT_TOKEN")
        self.insecure = insecure
        self.timeout = timeout
        self._session = requests.Session()

    def _headers(self) -> dict[str, str]:
        if self.insecure or not self.token:
            return {}
        return {"Authorization": f"Bearer {self.token}"}

    def _request(self, method: str, path: str, *, body: Any = None,
                 params: Mapping[str, Any] | None = None) -> requests.Response:
        response = self._session.request(
            method,
            self.server + path,
            json=body,
            params=params,
            headers=self._headers(),
            timeout=self.timeout,
        )
        if response.status_code >= 400:
            try:
                doc = response.json()
            except ValueError:
                raise ApiError(response.status_code, "Internal", response.text) from None
            raise ApiError(
                response.status_code,
                doc.get("code", "Internal"),
                doc.get("message", ""),
                doc.get("details"),
            )
        return response

    def create(self, spec: ExperimentSpec | Mapping[str, Any]) -> dict[str, Any]:
        body = spec.to_wire() if isinstance(spec, ExperimentSpec) else dict(spec)
        return self._request("POST", "/api/v1/experiment", body=body).json()

    def from_template(self, name: str, params: Mapping[str, str]) -> dict[str, Any]:
        return self._request(
            "POST",
            f"/api/v1/experiment/from-template/{name}",
            body={"params": dict(params)},
        ).json()

    def get(self, experiment_id: str) -> dict[str, Any]:
        return self._request("GET", f"/api/v1/experiment/{experiment_id}").json()

    def list(self, namespace: str | None = None, limit: int | None = None) -> list[dict[str, Any]]:
        params: dict[str, Any] = {}
        if namespace is not None:
            params["namespace"] = namespace
        if limit is not None:
            params["limit"] = limit
        return self._request("GET", "/api/v1/experiment", params=params).json()["experiments"]

    def kill(self, experiment_id: str) -> dict[str, Any]:
        return self._request("POST", f"/api/v1/experiment/{experiment_id}/kill").json()

    def logs(self, experiment_id: str) -> str:
        return self._request("GET", f"/api/v1/experiment/{experiment_id}/logs").text


__all__ = [
    "ApiError",
    "EnvironmentSpec",
    "ExperimentClient",
    "ExperimentMeta",
    "ExperimentSpec",
    "ExperimentTaskSpec",
    "__version__",
]
