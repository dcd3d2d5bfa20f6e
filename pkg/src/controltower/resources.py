"""Resource demand values and the `cpu=..,gpu=..,memory=..` string grammar.

The textual grammar is the lingua franca of every surface (CLI flags, SDK
task specs, template bodies, cluster configs): a comma-separated list of
``key=value`` pairs. ``cpu`` and ``vcores`` are aliases for the same field;
memory takes an optional K/M/G binary suffix (KiB/MiB/GiB, bare number =
MiB); a ``replicas`` pair may ride along in task-spec strings and is
surfaced separately because it is not a resource.

Canonical output is always ``cpu=<n>,gpu=<n>,memory=<mib>M`` so that
``parse(format(r)) == r`` holds for every valid spec.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    DuplicateKey,
    EmptySpec,
    MalformedPair,
    NegativeValue,
    UnknownKey,
    UnknownUnit,
)

# Binary multipliers into MiB. K floors: sub-MiB amounts round down.
_MIB_PER_UNIT = {"M": 1, "G": 1024}

_KNOWN_KEYS = {"cpu", "vcores", "gpu", "memory", "replicas"}


@dataclass(frozen=True)
class ResourceSpec:
    """Per-task (or per-node) resource amounts. All fields are counts >= 0."""

    vcores: int = 0
    gpu: int = 0
    memory_mib: int = 0

    def fits_within(self, other: "ResourceSpec") -> bool:
        return (
            self.vcores <= other.vcores
            and self.gpu <= other.gpu
            and self.memory_mib <= other.memory_mib
        )

    def plus(self, other: "ResourceSpec") -> "ResourceSpec":
        return ResourceSpec(
            self.vcores + other.vcores,
            self.gpu + other.gpu,
            self.memory_mib + other.memory_mib,
        )

    def minus(self, other: "ResourceSpec") -> "ResourceSpec":
        return ResourceSpec(
            self.vcores - other.vcores,
            self.gpu - other.gpu,
            self.memory_mib - other.memory_mib,
        )

    def scaled(self, factor: int) -> "ResourceSpec":
        return ResourceSpec(self.vcores * factor, self.gpu * factor, self.memory_mib * factor)

    def is_zero(self) -> bool:
        return self.vcores == 0 and self.gpu == 0 and self.memory_mib == 0


ZERO = ResourceSpec()


def _parse_count(raw: str, pair: str) -> int:
    if raw.startswith("-"):
        raise NegativeValue(f"negative value in '{pair}'")
    if not raw.isdigit():
        raise MalformedPair(f"value in '{pair}' is not a non-negative integer")
    return int(raw)


def _parse_memory(raw: str, pair: str) -> int:
    if raw.startswith("-"):
        raise NegativeValue(f"negative value in '{pair}'")
    if not raw:
        raise MalformedPair(f"empty value in '{pair}'")
    suffix = raw[-1]
    if suffix.isalpha():
        digits = raw[:-1]
        unit = suffix.upper()
        if unit == "K":
            if not digits.isdigit():
                raise MalformedPair(f"value in '{pair}' is not a non-negative integer")
            return int(digits) // 1024
        if unit not in _MIB_PER_UNIT:
            raise UnknownUnit(f"unknown memory unit '{suffix}' in '{pair}' (expected K, M or G)")
        if not digits.isdigit():
            raise MalformedPair(f"value in '{pair}' is not a non-negative integer")
        return int(digits) * _MIB_PER_UNIT[unit]
    if not raw.isdigit():
        raise MalformedPair(f"value in '{pair}' is not a non-negative integer")
    return int(raw)


def parse_task_resources(s: str) -> tuple[ResourceSpec, int | None]:
    """Parse a resource string, surfacing an inline ``replicas`` pair.

    Returns ``(resources, replicas)`` where replicas is None when the string
    carries no ``replicas`` pair. Whitespace around pairs, keys and values is
    tolerated so SDK-style multi-line strings parse unchanged.
    """
    if not s or not s.strip():
        raise EmptySpec("resource string is empty")

    values: dict[str, int] = {}
    replicas: int | None = None
    for segment in s.split(","):
        pair = segment.strip()
        if not pair:
            raise MalformedPair(f"empty pair in '{s}'")
        key, eq, raw_value = pair.partition("=")
        if not eq:
            raise MalformedPair(f"'{pair}' is missing '='")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _KNOWN_KEYS:
            raise UnknownKey(f"unknown resource key '{key}'")
        canonical = "cpu" if key == "vcores" else key
        if canonical == "replicas":
            if replicas is not None:
                raise DuplicateKey("duplicate key 'replicas'")
            replicas = _parse_count(raw_value, pair)
            continue
        if canonical in values:
            raise DuplicateKey(f"duplicate key '{canonical}'")
        if canonical == "memory":
            values["memory"] = _parse_memory(raw_value, pair)
        else:
            values[canonical] = _parse_count(raw_value, pair)

    return (
        ResourceSpec(
            vcores=values.get("cpu", 0),
            gpu=values.get("gpu", 0),
            memory_mib=values.get("memory", 0),
        ),
        replicas,
    )


def parse_resource_string(s: str) -> ResourceSpec:
    """Parse a resource string; an inline ``replicas`` pair is accepted and dropped."""
    resources, _ = parse_task_resources(s)
    return resources


def format_resource_string(r: ResourceSpec) -> str:
    """Canonical textual form; memory always in MiB, `cpu` as the core alias."""
    return f"cpu={r.vcores},gpu={r.gpu},memory={r.memory_mib}M"
