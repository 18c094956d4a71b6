"""Named extensions grouped by entry point.

Codecs and the analytic functions known to the command line are found by
name. Entries declared under an entry point group override the built-in
ones passed as defaults:

    >>> registry = Registry(defaults={"numbers": {"one": 1}})
    >>> registry.get("numbers", "one")
    1
    >>> registry.add("numbers", "two", 2).names("numbers")
    ['one', 'two']
"""

import contextlib
import logging
from importlib.metadata import entry_points

from attrs import define, field

logger = logging.getLogger(__name__)

CODEC_GROUP = "meromorphic_envelopes.codec"

FUNCTIONS_GROUP = "meromorphic_envelopes.functions"


def get_entry_points(group):
    """Get the entry points declared for a group."""
    try:
        return entry_points().select(group=group)
    except AttributeError:
        # Backward compatibility with Python 3.9.
        return entry_points().get(group, [])


@define
class Registry:
    """Groups of named entries, loaded on first use."""

    groups = field(factory=dict)
    defaults = field(factory=dict, repr=False)

    def load(self, group):
        """Fill the group from its defaults and installed entry points."""
        entries = self.groups.setdefault(group, {})
        for name, entry in self.defaults.get(group, {}).items():
            entries.setdefault(name, entry)

        for entry_point in get_entry_points(group):
            entries[entry_point.name] = entry_point.load()

        logger.debug("Loaded %(count)s entries in %(group)s", {"count": len(entries), "group": group})
        return entries

    def entries(self, group):
        """Return the name to entry mapping of a group, loading it on first use."""
        if group not in self.groups:
            self.load(group)

        return self.groups[group]

    def add(self, group, name, entry):
        """Add an entry, replacing any with the same name.

        :return: The registry itself.
        """
        self.entries(group)[name] = entry
        return self

    def remove(self, group, name):
        """Remove an entry; missing entries are ignored."""
        with contextlib.suppress(KeyError):
            del self.groups[group][name]

    def get(self, group, name):
        """Get an entry by name.

        :raises KeyError: If the group has no such entry.
        """
        entries = self.entries(group)
        try:
            return entries[name]
        except KeyError:
            raise KeyError(f"Unknown {group} entry {name!r}, expected one of {sorted(entries)}") from None

    def names(self, group):
        """Return the sorted entry names of a group."""
        return sorted(self.entries(group))
