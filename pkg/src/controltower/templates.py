"""Predefined experiment templates: parameterized spec bodies.

A template is a spec skeleton whose string fields may carry ``{{param}}``
tokens, plus the parameter declarations users must fill. Instantiation is
single-pass literal text substitution (a substituted value containing
``{{x}}`` is never re-expanded), and the result must be a valid experiment
spec.

The body is kept as the raw JSON structure it was registered with, so a
register/get round trip preserves the template byte-for-byte under canonical
serialization.
"""

from __future__ import annotations

import copy
import re
import threading
from dataclasses import dataclass
from typing import Any, Mapping

from .errors import (
    Conflict,
    MissingRequiredParameter,
    NotFound,
    ResultInvalid,
    ServiceError,
    UnknownParameter,
    ValidationFailed,
)
from .model import (
    ExperimentSpec,
    Violation,
    spec_from_wire,
    validate_experiment_spec,
)
from .store import WalStore

TOKEN_RE = re.compile(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}")
PARAM_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

Scalar = str | int | float | bool | None


@dataclass(frozen=True)
class TemplateParameter:
    name: str
    value: Scalar = None  # default; kept as the raw JSON scalar
    required: bool = False

    def default_text(self) -> str | None:
        if self.value is None:
            return None
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        return str(self.value)


@dataclass(frozen=True)
class TemplateSpec:
    name: str
    author: str
    description: str
    parameters: tuple[TemplateParameter, ...]
    body: dict[str, Any]  # raw experimentSpec JSON, preserved as registered

    def to_wire(self) -> dict[str, Any]:
        params = []
        for p in self.parameters:
            entry: dict[str, Any] = {"name": p.name}
            if p.value is not None:
                entry["value"] = p.value
            entry["required"] = p.required
            params.append(entry)
        return {
            "name": self.name,
            "author": self.author,
            "description": self.description,
            "parameters": params,
            "experimentSpec": copy.deepcopy(self.body),
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "TemplateSpec":
        if not isinstance(doc, Mapping):
            raise ValidationFailed("template must be a JSON object")
        unknown = sorted(set(doc) - {"name", "author", "description", "parameters", "experimentSpec"})
        if unknown:
            raise ValidationFailed(f"unknown template fields: {unknown}")
        raw_params = doc.get("parameters", [])
        if not isinstance(raw_params, list):
            raise ValidationFailed("'parameters' must be a list")
        params = []
        for i, raw in enumerate(raw_params):
            if not isinstance(raw, Mapping):
                raise ValidationFailed(f"parameters[{i}] must be an object")
            extra = sorted(set(raw) - {"name", "value", "required"})
            if extra:
                raise ValidationFailed(f"parameters[{i}]: unknown fields {extra}")
            params.append(
                TemplateParameter(
                    name=str(raw.get("name", "")),
                    value=raw.get("value"),
                    required=bool(raw.get("required", False)),
                )
            )
        body = doc.get("experimentSpec", {})
        if not isinstance(body, Mapping):
            raise ValidationFailed("'experimentSpec' must be an object")
        return cls(
            name=str(doc.get("name", "")),
            author=str(doc.get("author", "")),
            description=str(doc.get("description", "")),
            parameters=tuple(params),
            body=copy.deepcopy(dict(body)),
        )


def _walk_strings(value: Any) -> list[str]:
    if isinstance(value, str):
        return [value]
    if isinstance(value, Mapping):
        out: list[str] = []
        for v in value.values():
            out.extend(_walk_strings(v))
        return out
    if isinstance(value, list):
        out = []
        for v in value:
            out.extend(_walk_strings(v))
        return out
    return []


def body_tokens(body: Mapping[str, Any]) -> list[str]:
    """All {{token}} names occurring in the body's string fields, in order."""
    tokens: list[str] = []
    for text in _walk_strings(body):
        tokens.extend(TOKEN_RE.findall(text))
    return tokens


def substitute(body: Mapping[str, Any], values: Mapping[str, str]) -> tuple[dict[str, Any], int]:
    """Replace every token with its value. Returns (new body, replacement count).

    Single pass: replacement text is emitted literally, never re-scanned.
    """
    count = 0

    def _sub_text(text: str) -> str:
        nonlocal count

        def _repl(match: re.Match[str]) -> str:
            nonlocal count
            count += 1
            return values[match.group(1)]

        return TOKEN_RE.sub(_repl, text)

    def _sub(value: Any) -> Any:
        if isinstance(value, str):
            return _sub_text(value)
        if isinstance(value, Mapping):
            return {k: _sub(v) for k, v in value.items()}
        if isinstance(value, list):
            return [_sub(v) for v in value]
        return value

    return _sub(dict(body)), count


def _effective_body(template: TemplateSpec, values: Mapping[str, str]) -> dict[str, Any]:
    body, _ = substitute(template.body, values)
    meta = body.setdefault("meta", {})
    if isinstance(meta, dict) and not meta.get("name"):
        # skeleton bodies may omit the experiment name; the template's own
        # name is the default
        meta["name"] = template.name
    return body


def validate_template(template: TemplateSpec) -> list[Violation]:
    """Grammar, token<->declaration bijection, and a default-expansion dry run."""
    out: list[Violation] = []

    declared: set[str] = set()
    for i, param in enumerate(template.parameters):
        path = f"parameters[{i}]"
        if not PARAM_NAME_RE.match(param.name):
            out.append(Violation(path, f"invalid parameter name '{param.name}'"))
            continue
        if param.name in declared:
            out.append(Violation(path, f"duplicate parameter '{param.name}'"))
        declared.add(param.name)

    used = set(body_tokens(template.body))
    for token in sorted(used - declared):
        out.append(Violation("experimentSpec", f"UndeclaredToken '{token}'"))
    for name in sorted(declared - used):
        out.append(Violation("parameters", f"UnusedParameter '{name}'"))
    if out:
        return out

    # dry run: defaults (or "0" where none) must yield a valid spec
    defaults = {p.name: p.default_text() if p.default_text() is not None else "0"
                for p in template.parameters}
    try:
        spec = spec_from_wire(_effective_body(template, defaults))
    except ServiceError as exc:  # shape or resource-grammar failure
        return [Violation("experimentSpec", exc.message)]
    return [Violation(f"experimentSpec.{v.path}", v.message) for v in validate_experiment_spec(spec)]


class TemplateRegistry:
    def __init__(self, store: WalStore | None = None):
        self._store = store
        self._lock = threading.RLock()
        self._templates: dict[str, TemplateSpec] = {}

    def restore(self, op: str, data: Any) -> None:
        if op == "template.put":
            template = TemplateSpec.from_wire(data)
            self._templates[template.name] = template
        elif op == "template.delete":
            self._templates.pop(data["name"], None)

    def register(self, template: TemplateSpec) -> TemplateSpec:
        violations = validate_template(template)
        if violations:
            raise ValidationFailed(
                f"template '{template.name}' is invalid",
                details=[v.as_dict() for v in violations],
            )
        with self._lock:
            if template.name in self._templates:
                raise Conflict(f"template '{template.name}' already registered")
            if self._store is not None:
                self._store.append("template.put", template.to_wire())
            self._templates[template.name] = template
            return template

    def get(self, name: str) -> TemplateSpec:
        with self._lock:
            try:
                return self._templates[name]
            except KeyError:
                raise NotFound(f"template '{name}' not found") from None

    def list(self) -> list[TemplateSpec]:
        with self._lock:
            return list(self._templates.values())

    def delete(self, name: str) -> None:
        with self._lock:
            if name not in self._templates:
                raise NotFound(f"template '{name}' not found")
            if self._store is not None:
                self._store.append("template.delete", {"name": name})
            del self._templates[name]

    def instantiate(self, name: str, params: Mapping[str, str]) -> ExperimentSpec:
        """Fill a registered template's tokens with the supplied values.

        Required parameters must be supplied explicitly; a declared default
        never satisfies ``required`` (it is a UI prefill). Optional
        parameters fall back to their default.
        """
        template = self.get(name)
        declared = {p.name: p for p in template.parameters}

        for key in params:
            if key not in declared:
                raise UnknownParameter(f"parameter '{key}' is not declared by '{name}'")

        values: dict[str, str] = {}
        for pname, param in declared.items():
            if pname in params:
                values[pname] = str(params[pname])
            elif param.required:
                raise MissingRequiredParameter(f"parameter '{pname}' is required")
            else:
                default = param.default_text()
                if default is None:
                    raise MissingRequiredParameter(
                        f"parameter '{pname}' has no default and was not supplied"
                    )
                values[pname] = default

        body = _effective_body(template, values)
        try:
            spec = spec_from_wire(body)
        except ServiceError as exc:
            raise ResultInvalid(f"instantiated spec is invalid: {exc.message}") from exc
        violations = validate_experiment_spec(spec)
        if violations:
            raise ResultInvalid(
                "instantiated spec is invalid",
                details=[v.as_dict() for v in violations],
            )
        return spec
