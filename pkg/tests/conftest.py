import json
from pathlib import Path

import pytest

from controltower.environments import EnvironmentRegistry
from controltower.experiments import ExperimentManager
from controltower.model import (
    EnvironmentRef,
    ExperimentMeta,
    ExperimentSpec,
    ExperimentTaskSpec,
)
from controltower.resources import ResourceSpec
from controltower.templates import TemplateRegistry, TemplateSpec

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def mnist_template_doc() -> dict:
    return json.loads((DATA_DIR / "tf-mnist-template.json").read_text())


@pytest.fixture
def mnist_template(mnist_template_doc) -> TemplateSpec:
    return TemplateSpec.from_wire(mnist_template_doc)


@pytest.fixture
def mnist_spec() -> ExperimentSpec:
    """The distributed-training example spec: 1 Ps + 4 GPU workers."""
    return ExperimentSpec(
        meta=ExperimentMeta(
            name="mnist", namespace="default", framework="TensorFlow", cmd="python mnist.py"
        ),
        environment=EnvironmentRef.inline_image("submarine:tf-mnist"),
        tasks={
            "Ps": ExperimentTaskSpec(replicas=1, resources=ResourceSpec(2, 0, 2048)),
            "Worker": ExperimentTaskSpec(replicas=4, resources=ResourceSpec(4, 4, 4096)),
        },
    )


def make_manager(store=None) -> ExperimentManager:
    environments = EnvironmentRegistry(store)
    templates = TemplateRegistry(store)
    return ExperimentManager(store, environments, templates)


@pytest.fixture
def manager() -> ExperimentManager:
    return make_manager()
