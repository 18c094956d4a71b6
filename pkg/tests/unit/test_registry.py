"""Unit tests for the registry module."""

from importlib.metadata import EntryPoint
from unittest.mock import patch

import pytest

import meromorphic_envelopes.registry
from meromorphic_envelopes.registry import CODEC_GROUP, FUNCTIONS_GROUP, Registry


def test_registry_load():
    """Entry points should be loaded into their group."""
    with patch.object(meromorphic_envelopes.registry, "get_entry_points") as mock_entry_points:
        mock_entry_points.return_value = iter([
            EntryPoint("registry", "meromorphic_envelopes.registry", "meromorphic_envelopes.group"),
        ])
        registry = Registry()
        entries = registry.load("group")
        assert entries["registry"] == meromorphic_envelopes.registry
        mock_entry_points.assert_called_once_with("group")


def test_registry_load_overrides_defaults():
    """Entry points should replace defaults with the same name."""
    with patch.object(meromorphic_envelopes.registry, "get_entry_points") as mock_entry_points:
        mock_entry_points.return_value = iter([
            EntryPoint("one", "meromorphic_envelopes.registry", "meromorphic_envelopes.group"),
        ])
        registry = Registry(defaults={"group": {"one": 1, "two": 2}})
        assert registry.get("group", "one") == meromorphic_envelopes.registry
        assert registry.get("group", "two") == 2


def test_registry_loads_once():
    """Entries should be loaded on first use only."""
    with patch.object(meromorphic_envelopes.registry, "get_entry_points", return_value=[]) as mock_entry_points:
        registry = Registry(defaults={"group": {"one": 1}})
        registry.entries("group")
        registry.entries("group")
        assert mock_entry_points.call_count == 1


def test_registry_add():
    """Adding to an empty registry should create the group."""
    registry = Registry().add("group", "name", True)
    assert registry.get("group", "name")


def test_registry_add_existing():
    """Adding an entry should replace an existing one."""
    registry = Registry(defaults={"group": {"name": False}})
    assert registry.add("group", "name", True).get("group", "name")


def test_registry_remove_empty():
    """Removing from an empty registry should do nothing."""
    Registry().remove("group", "name")


def test_registry_remove_existing():
    """Removing an existing entry should keep the others."""
    registry = Registry().add("group", "name1", True).add("group", "name2", True)
    registry.remove("group", "name1")
    assert registry.names("group") == ["name2"]


def test_registry_get_error():
    """Getting a missing entry should raise listing the known names."""
    registry = Registry(defaults={"group": {"known": 1}})
    with pytest.raises(KeyError, match="known"):
        registry.get("group", "name")


@pytest.mark.parametrize(
    "group, name",
    [
        (CODEC_GROUP, "connection"),
        (CODEC_GROUP, "matrix"),
        (FUNCTIONS_GROUP, "exp"),
    ],
)
def test_registry_get_declared(group, name):
    """Declared entry points should be found when the package is installed."""
    if not any(entry_point.name == name for entry_point in meromorphic_envelopes.registry.get_entry_points(group)):
        pytest.skip("package is not installed")

    assert Registry().get(group, name) is not None
