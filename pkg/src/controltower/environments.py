"""Named execution environments: image reference plus dependency metadata.

Environments make experiments reproducible: at submission the referenced
image string is copied into the experiment record, so later registry edits
can never change what a past experiment ran on. Deleting an environment is
refused while a live experiment still references it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import yaml

from .errors import Conflict, InUse, MissingField, NotFound, UnknownField, YamlSyntax
from .store import WalStore

_FIELDS = {"name", "image", "channels", "dependencies"}


@dataclass(frozen=True)
class EnvironmentSpec:
    name: str
    image: str
    dependency_channels: tuple[str, ...] = ()
    dependencies: tuple[str, ...] = ()

    def to_wire(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "image": self.image,
            "channels": list(self.dependency_channels),
            "dependencies": list(self.dependencies),
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "EnvironmentSpec":
        unknown = sorted(set(doc) - _FIELDS)
        if unknown:
            raise UnknownField(f"unknown environment fields: {unknown}")
        for key in ("name", "image"):
            if not doc.get(key):
                raise MissingField(f"environment field '{key}' is required")
        return cls(
            name=str(doc["name"]),
            image=str(doc["image"]),
            dependency_channels=_string_items(doc.get("channels", []), "channels"),
            dependencies=_string_items(doc.get("dependencies", []), "dependencies"),
        )


def _string_items(value: Any, key: str) -> tuple[str, ...]:
    if not isinstance(value, (list, tuple)):
        raise YamlSyntax(f"'{key}' must be a list of strings")
    out = []
    for item in value:
        if not isinstance(item, str):
            raise YamlSyntax(f"'{key}' entries must be strings, got {type(item).__name__}")
        out.append(item)
    return tuple(out)


def parse_environment_yaml(text: str) -> EnvironmentSpec:
    """Parse the environment file format: name, image, channels, dependencies."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise YamlSyntax(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise YamlSyntax("environment file must be a YAML mapping")
    return EnvironmentSpec.from_wire(doc)


class EnvironmentRegistry:
    """Name-keyed registry; mutations are serialized and written through the store."""

    def __init__(self, store: WalStore | None = None):
        self._store = store
        self._lock = threading.RLock()
        self._specs: dict[str, EnvironmentSpec] = {}
        # Wired by the control plane: answers "does any live experiment use this?"
        self._in_use: Callable[[str], bool] = lambda name: False

    def set_in_use_probe(self, probe: Callable[[str], bool]) -> None:
        self._in_use = probe

    def restore(self, op: str, data: Any) -> None:
        if op == "environment.put":
            spec = EnvironmentSpec.from_wire(data)
            self._specs[spec.name] = spec
        elif op == "environment.delete":
            self._specs.pop(data["name"], None)

    def register(self, spec: EnvironmentSpec) -> EnvironmentSpec:
        with self._lock:
            if spec.name in self._specs:
                raise Conflict(f"environment '{spec.name}' already registered")
            if self._store is not None:
                self._store.append("environment.put", spec.to_wire())
            self._specs[spec.name] = spec
            return spec

    def get(self, name: str) -> EnvironmentSpec:
        with self._lock:
            try:
                return self._specs[name]
            except KeyError:
                raise NotFound(f"environment '{name}' not found") from None

    def list(self) -> list[EnvironmentSpec]:
        with self._lock:
            return list(self._specs.values())

    def delete(self, name: str) -> None:
        with self._lock:
            if name not in self._specs:
                raise NotFound(f"environment '{name}' not found")
            if self._in_use(name):
                raise InUse(f"environment '{name}' is referenced by a live experiment")
            if self._store is not None:
                self._store.append("environment.delete", {"name": name})
            del self._specs[name]
