"""Command-line client for the control plane.

Exit codes: 0 success, 1 API/transport error (message on stderr), 2 usage
error (argparse). ``--insecure`` is the only thing that omits the
Authorization header; otherwise the token comes from --token or CT_TOKEN.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Any, Callable, Sequence

from .errors import ServiceError
from .model import canonical_json
from .resources import format_resource_string, parse_task_resources

DEFAULT_SERVER = "http://127.0.0.1:8000"

# transport(method, url, json_body=, content=, params=, headers=) -> (status, payload)
TransportFn = Callable[..., tuple[int, Any]]


class CliError(Exception):
    """API or transport failure: exit code 1."""


class UsageError(Exception):
    """Bad flag values caught client-side: exit code 2, like argparse."""


def _requests_transport(
    method: str,
    url: str,
    *,
    json_body: dict | None = None,
    content: bytes | None = None,
    params: dict | None = None,
    headers: dict[str, str],
) -> tuple[int, Any]:
    import requests

    try:
        response = requests.request(
            method,
            url,
            json=json_body,
            data=content,
            params=params,
            headers=headers,
            timeout=60,
        )
    except requests.RequestException as exc:
        raise CliError(f"cannot reach server: {exc}") from exc
    content_type = response.headers.get("content-type", "")
    if "application/json" in content_type:
        return response.status_code, response.json()
    return response.status_code, response.text


class Client:
    def __init__(
        self,
        server: str,
        token: str | None,
        insecure: bool,
        transport: TransportFn = _requests_transport,
    ):
        self.server = server.rstrip("/")
        self.token = token
        self.insecure = insecure
        self._transport = transport

    def headers(self, content_type: str | None = None) -> dict[str, str]:
        headers: dict[str, str] = {}
        if not self.insecure and self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        if content_type:
            headers["Content-Type"] = content_type
        return headers

    def _check(self, status: int, payload: Any) -> Any:
        if status >= 400:
            if isinstance(payload, dict):
                raise CliError(f"{payload.get('code', status)}: {payload.get('message', '')}")
            raise CliError(f"HTTP {status}: {payload}")
        return payload

    def call(
        self,
        method: str,
        path: str,
        body: dict | None = None,
        params: dict | None = None,
    ) -> Any:
        status, payload = self._transport(
            method, self.server + path, json_body=body, params=params, headers=self.headers()
        )
        return self._check(status, payload)

    def call_text(self, method: str, path: str, text: str, content_type: str) -> Any:
        status, payload = self._transport(
            method,
            self.server + path,
            content=text.encode("utf-8"),
            headers=self.headers(content_type),
        )
        return self._check(status, payload)


def build_job_run_spec(args: argparse.Namespace) -> dict[str, Any]:
    """Translate `job run` flags into the canonical spec document.

    The body is emitted already canonical (resource strings normalized), so
    it is byte-identical to the server's serialization of the same spec.
    The worker launch command doubles as meta.cmd; a per-role override is
    recorded only when it differs, so flag-style and spec-style submissions
    of the same experiment canonicalize identically.
    """
    meta_cmd = args.worker_launch_cmd or ""
    tasks: dict[str, Any] = {}

    def _task(flag: str, count: int | None, resources: str, launch_cmd: str | None,
              fallback: int) -> dict[str, Any]:
        parsed, inline_replicas = parse_task_resources(resources or "cpu=0")
        if count is not None and inline_replicas is not None and count != inline_replicas:
            raise UsageError(
                f"{flag} disagrees with replicas={inline_replicas} in the resource string"
            )
        replicas = count if count is not None else (
            inline_replicas if inline_replicas is not None else fallback
        )
        task: dict[str, Any] = {
            "replicas": replicas,
            "resources": format_resource_string(parsed),
        }
        if launch_cmd and launch_cmd != meta_cmd:
            task["launch_cmd_override"] = launch_cmd
        return task

    ps_wanted = (args.num_ps is not None and args.num_ps > 0) or (
        args.num_ps is None and bool(args.ps_resources)
    )
    if ps_wanted:
        tasks["Ps"] = _task("--num_ps", args.num_ps, args.ps_resources, args.ps_launch_cmd, 1)
    tasks["Worker"] = _task(
        "--num_workers", args.num_workers, args.worker_resources, args.worker_launch_cmd, 1
    )

    doc: dict[str, Any] = {
        "meta": {
            "name": args.name,
            "namespace": args.namespace,
            "framework": args.framework or "",
            "cmd": meta_cmd,
        },
        "spec": tasks,
        "environment": {"image": args.image},
    }
    conf = _parse_kv_pairs(args.conf or [], "--conf")
    if conf:
        doc["conf"] = conf
    return doc


def _parse_kv_pairs(pairs: Sequence[str], flag: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        key, eq, value = pair.partition("=")
        if not eq or not key:
            raise CliError(f"{flag} expects key=value, got '{pair}'")
        out[key] = value
    return out


def _print_table(rows: list[dict[str, Any]], columns: list[str]) -> None:
    if not rows:
        print("(none)")
        return
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns}
    print("  ".join(c.upper().ljust(widths[c]) for c in columns))
    for row in rows:
        print("  ".join(str(row.get(c, "")).ljust(widths[c]) for c in columns))


def _emit(args: argparse.Namespace, payload: Any, table: Callable[[Any], None]) -> None:
    if args.json:
        print(canonical_json(payload))
    else:
        table(payload)


def _experiment_line(record: dict[str, Any]) -> None:
    print(f"{record['id']}  {record['spec']['meta']['name']}  {record['status']}")


# -- subcommand handlers ------------------------------------------------------


def _cmd_job_run(client: Client, args: argparse.Namespace) -> None:
    record = client.call("POST", "/api/v1/experiment", body=build_job_run_spec(args))
    _emit(args, record, _experiment_line)


def _cmd_job_list(client: Client, args: argparse.Namespace) -> None:
    params: dict[str, Any] = {}
    if args.namespace_filter:
        params["namespace"] = args.namespace_filter
    if args.limit is not None:
        params["limit"] = args.limit
    payload = client.call("GET", "/api/v1/experiment", params=params)
    _emit(
        args,
        payload,
        lambda p: _print_table(p["experiments"], ["id", "name", "status", "created_at"]),
    )


def _cmd_job_get(client: Client, args: argparse.Namespace) -> None:
    record = client.call("GET", f"/api/v1/experiment/{args.id}")

    def _show(r: dict[str, Any]) -> None:
        _experiment_line(r)
        print(f"image: {r['resolved_image']}")
        for event in r["events"]:
            print(f"  [{event['timestamp']}] {event['kind']}: {event['detail']}")

    _emit(args, record, _show)


def _cmd_job_kill(client: Client, args: argparse.Namespace) -> None:
    record = client.call("POST", f"/api/v1/experiment/{args.id}/kill")
    _emit(args, record, _experiment_line)


def _cmd_job_logs(client: Client, args: argparse.Namespace) -> None:
    seen = 0
    while True:
        text = client.call("GET", f"/api/v1/experiment/{args.id}/logs")
        if not isinstance(text, str):
            text = str(text)
        print(text[seen:], end="")
        seen = len(text)
        if not args.follow:
            break
        record = client.call("GET", f"/api/v1/experiment/{args.id}")
        if record["status"] in ("Succeeded", "Failed", "Killed"):
            break
        time.sleep(args.poll_interval)


def _cmd_template_register(client: Client, args: argparse.Namespace) -> None:
    with open(args.file, encoding="utf-8") as fh:
        doc = json.load(fh)
    payload = client.call("POST", "/api/v1/template", body=doc)
    _emit(args, payload, lambda p: print(f"registered template '{p['name']}'"))


def _cmd_template_list(client: Client, args: argparse.Namespace) -> None:
    payload = client.call("GET", "/api/v1/template")
    _emit(args, payload, lambda p: _print_table(p["templates"], ["name", "description"]))


def _cmd_template_get(client: Client, args: argparse.Namespace) -> None:
    payload = client.call("GET", f"/api/v1/template/{args.name}")
    _emit(args, payload, lambda p: print(canonical_json(p)))


def _cmd_template_delete(client: Client, args: argparse.Namespace) -> None:
    payload = client.call("DELETE", f"/api/v1/template/{args.name}")
    _emit(args, payload, lambda p: print(f"deleted template '{p['deleted']}'"))


def _cmd_template_run(client: Client, args: argparse.Namespace) -> None:
    params = _parse_kv_pairs(args.param or [], "--param")
    record = client.call(
        "POST", f"/api/v1/experiment/from-template/{args.name}", body={"params": params}
    )
    _emit(args, record, _experiment_line)


def _cmd_env_register(client: Client, args: argparse.Namespace) -> None:
    with open(args.file, encoding="utf-8") as fh:
        text = fh.read()
    payload = client.call_text("POST", "/api/v1/environment", text, "application/yaml")
    _emit(args, payload, lambda p: print(f"registered environment '{p['name']}'"))


def _cmd_env_list(client: Client, args: argparse.Namespace) -> None:
    payload = client.call("GET", "/api/v1/environment")
    _emit(args, payload, lambda p: _print_table(p["environments"], ["name", "image"]))


def _cmd_env_get(client: Client, args: argparse.Namespace) -> None:
    payload = client.call("GET", f"/api/v1/environment/{args.name}")
    _emit(args, payload, lambda p: print(canonical_json(p)))


def _cmd_env_delete(client: Client, args: argparse.Namespace) -> None:
    payload = client.call("DELETE", f"/api/v1/environment/{args.name}")
    _emit(args, payload, lambda p: print(f"deleted environment '{p['deleted']}'"))


def _cmd_cluster_status(client: Client, args: argparse.Namespace) -> None:
    payload = client.call("GET", "/api/v1/cluster")

    def _show(snapshot: dict[str, Any]) -> None:
        print(f"clock: {snapshot['clock_ms']} ms  queued: {len(snapshot['wait_queue'])}")
        _print_table(snapshot["nodes"], ["node_id", "capacity", "allocated", "running_tasks"])

    _emit(args, payload, _show)


def _cmd_cluster_tick(client: Client, args: argparse.Namespace) -> None:
    payload = client.call("POST", "/api/v1/cluster", body={"action": "tick", "dt_ms": args.ms})
    _emit(args, payload, lambda p: print(f"clock: {p['clock_ms']} ms"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=None, help="server URL (or CT_SERVER)")
    common.add_argument("--token", default=None, help="bearer token (or CT_TOKEN)")
    common.add_argument("--insecure", action="store_true", help="send no Authorization header")
    common.add_argument("--json", action="store_true", help="print raw API payloads")

    parser = argparse.ArgumentParser(prog="ct", description="experiment control plane client")
    top = parser.add_subparsers(dest="group", required=True)

    job = top.add_parser("job", help="experiment lifecycle").add_subparsers(
        dest="command", required=True
    )
    run = job.add_parser("run", parents=[common], help="submit an experiment")
    run.add_argument("--name", required=True)
    run.add_argument("--framework", default="")
    run.add_argument("--namespace", default="default")
    run.add_argument("--image", default=os.environ.get("CT_IMAGE", "local:process"))
    run.add_argument("--num_workers", type=int, default=None)
    run.add_argument("--worker_resources", default="")
    run.add_argument("--num_ps", type=int, default=None)
    run.add_argument("--ps_resources", default="")
    run.add_argument("--worker_launch_cmd", default=None)
    run.add_argument("--ps_launch_cmd", default=None)
    run.add_argument("--conf", action="append", metavar="KEY=VALUE")
    run.set_defaults(handler=_cmd_job_run)

    job_list = job.add_parser("list", parents=[common])
    job_list.add_argument("--namespace", dest="namespace_filter", default=None)
    job_list.add_argument("--limit", type=int, default=None)
    job_list.set_defaults(handler=_cmd_job_list)

    job_get = job.add_parser("get", parents=[common])
    job_get.add_argument("id")
    job_get.set_defaults(handler=_cmd_job_get)

    job_kill = job.add_parser("kill", parents=[common])
    job_kill.add_argument("id")
    job_kill.set_defaults(handler=_cmd_job_kill)

    job_logs = job.add_parser("logs", parents=[common])
    job_logs.add_argument("id")
    job_logs.add_argument("--follow", action="store_true")
    job_logs.add_argument("--poll-interval", type=float, default=1.0)
    job_logs.set_defaults(handler=_cmd_job_logs)

    template = top.add_parser("template", help="predefined templates").add_subparsers(
        dest="command", required=True
    )
    t_register = template.add_parser("register", parents=[common])
    t_register.add_argument("file", help="template JSON file")
    t_register.set_defaults(handler=_cmd_template_register)
    t_list = template.add_parser("list", parents=[common])
    t_list.set_defaults(handler=_cmd_template_list)
    t_get = template.add_parser("get", parents=[common])
    t_get.add_argument("name")
    t_get.set_defaults(handler=_cmd_template_get)
    t_delete = template.add_parser("delete", parents=[common])
    t_delete.add_argument("name")
    t_delete.set_defaults(handler=_cmd_template_delete)
    t_run = template.add_parser("run", parents=[common])
    t_run.add_argument("name")
    t_run.add_argument("--param", action="append", metavar="KEY=VALUE")
    t_run.set_defaults(handler=_cmd_template_run)

    env = top.add_parser("env", help="execution environments").add_subparsers(
        dest="command", required=True
    )
    e_register = env.add_parser("register", parents=[common])
    e_register.add_argument("file", help="environment YAML file")
    e_register.set_defaults(handler=_cmd_env_register)
    e_list = env.add_parser("list", parents=[common])
    e_list.set_defaults(handler=_cmd_env_list)
    e_get = env.add_parser("get", parents=[common])
    e_get.add_argument("name")
    e_get.set_defaults(handler=_cmd_env_get)
    e_delete = env.add_parser("delete", parents=[common])
    e_delete.add_argument("name")
    e_delete.set_defaults(handler=_cmd_env_delete)

    cluster = top.add_parser("cluster", help="simulated cluster").add_subparsers(
        dest="command", required=True
    )
    c_status = cluster.add_parser("status", parents=[common])
    c_status.set_defaults(handler=_cmd_cluster_status)
    c_tick = cluster.add_parser("tick", parents=[common])
    c_tick.add_argument("--ms", type=int, default=1000)
    c_tick.set_defaults(handler=_cmd_cluster_tick)

    return parser


def main(argv: Sequence[str] | None = None, transport: TransportFn | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    client = Client(
        server=args.server or os.environ.get("CT_SERVER", DEFAULT_SERVER),
        token=args.token or os.environ.get("CT_TOKEN"),
        insecure=args.insecure,
        transport=transport or _requests_transport,
    )
    try:
        args.handler(client, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ServiceError) as exc:
        # bad flag values (resource grammar and friends) are usage errors
        message = getattr(exc, "message", str(exc))
        print(f"usage error: {message}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
