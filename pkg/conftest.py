"""Load the shipped fixtures when the package is not installed."""

from meromorphic_envelopes.registry import get_entry_points

if not any(entry_point.value == "meromorphic_envelopes.fixtures" for entry_point in get_entry_points("pytest11")):
    pytest_plugins = ["meromorphic_envelopes.fixtures"]
