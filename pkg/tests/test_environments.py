import pytest

from controltower.environments import (
    EnvironmentRegistry,
    EnvironmentSpec,
    parse_environment_yaml,
)
from controltower.errors import Conflict, InUse, MissingField, NotFound, UnknownField, YamlSyntax


class TestYaml:
    def test_full_file(self):
        spec = parse_environment_yaml(
            "name: tf-env\n"
            "image: submarine:tf-mnist\n"
            "channels: [defaults]\n"
            "dependencies: [python=3.8, tensorflow]\n"
        )
        assert spec == EnvironmentSpec(
            name="tf-env",
            image="submarine:tf-mnist",
            dependency_channels=("defaults",),
            dependencies=("python=3.8", "tensorflow"),
        )

    def test_minimal(self):
        spec = parse_environment_yaml("name: e\nimage: i\n")
        assert spec == EnvironmentSpec(name="e", image="i")

    def test_missing_name(self):
        with pytest.raises(MissingField) as excinfo:
            parse_environment_yaml("image: i\n")
        assert "name" in str(excinfo.value)

    def test_missing_image(self):
        with pytest.raises(MissingField):
            parse_environment_yaml("name: e\n")

    def test_unknown_field(self):
        with pytest.raises(UnknownField):
            parse_environment_yaml("name: e\nimage: i\nflavor: mint\n")

    def test_bad_yaml(self):
        with pytest.raises(YamlSyntax):
            parse_environment_yaml("name: [unclosed\n")

    def test_non_mapping(self):
        with pytest.raises(YamlSyntax):
            parse_environment_yaml("- a\n- b\n")

    def test_non_string_dependency(self):
        with pytest.raises(YamlSyntax):
            parse_environment_yaml("name: e\nimage: i\ndependencies: [{python: 3.8}]\n")

    def test_dependencies_kept_verbatim(self):
        spec = parse_environment_yaml(
            'name: e\nimage: i\ndependencies: ["numpy>=1.20", "scipy==1.9.1"]\n'
        )
        assert spec.dependencies == ("numpy>=1.20", "scipy==1.9.1")


class TestRegistry:
    def test_roundtrip(self):
        registry = EnvironmentRegistry()
        spec = EnvironmentSpec(name="tf-env", image="submarine:tf-mnist")
        registry.register(spec)
        assert registry.get("tf-env") == spec

    def test_conflict(self):
        registry = EnvironmentRegistry()
        registry.register(EnvironmentSpec(name="e", image="i"))
        with pytest.raises(Conflict):
            registry.register(EnvironmentSpec(name="e", image="other"))

    def test_not_found(self):
        registry = EnvironmentRegistry()
        with pytest.raises(NotFound):
            registry.get("ghost")
        with pytest.raises(NotFound):
            registry.delete("ghost")

    def test_list_empty(self):
        assert EnvironmentRegistry().list() == []

    def test_delete(self):
        registry = EnvironmentRegistry()
        registry.register(EnvironmentSpec(name="e", image="i"))
        registry.delete("e")
        assert registry.list() == []

    def test_delete_refused_while_in_use(self):
        registry = EnvironmentRegistry()
        registry.register(EnvironmentSpec(name="e", image="i"))
        registry.set_in_use_probe(lambda name: name == "e")
        with pytest.raises(InUse):
            registry.delete("e")
