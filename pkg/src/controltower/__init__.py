"""Experiment orchestration control plane.

Submit replicated experiments directly, via templates, or from the CLI; run
them as local processes or on a gang-scheduled simulated cluster; track
status, events, metrics and logs in a crash-safe embedded store; operate
everything over a REST API.
"""

__version__ = "0.1.0"

from .environments import EnvironmentSpec, parse_environment_yaml
from .errors import ServiceError
from .model import (
    EnvironmentRef,
    Event,
    EventKind,
    ExperimentMeta,
    ExperimentSpec,
    ExperimentStatus,
    ExperimentTaskSpec,
    MetricPoint,
    aggregate_demand,
    validate_experiment_spec,
)
from .resources import ResourceSpec, format_resource_string, parse_resource_string
from .templates import TemplateParameter, TemplateSpec, validate_template

__all__ = [
    "EnvironmentRef",
    "EnvironmentSpec",
    "Event",
    "EventKind",
    "ExperimentMeta",
    "ExperimentSpec",
    "ExperimentStatus",
    "ExperimentTaskSpec",
    "MetricPoint",
    "ResourceSpec",
    "ServiceError",
    "TemplateParameter",
    "TemplateSpec",
    "aggregate_demand",
    "format_resource_string",
    "parse_environment_yaml",
    "parse_resource_string",
    "validate_experiment_spec",
    "validate_template",
    "__version__",
]
