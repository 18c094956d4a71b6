"""JSON encoding and decoding of the domain types.

Complex numbers are [re, im] pairs and matrices are row-major nested
lists of pairs:

    >>> import numpy as np
    >>> dumps(1 + 2j)
    '[1.0,2.0]'
    >>> dumps({"m": np.eye(1)})
    '{"m":[[[1.0,0.0]]]}'

The Codec class dispatches on the most specific type of a value, so it
can be extended with plugins for more types:

    >>> from attrs import make_class
    >>> Foo = make_class('Foo', ['x'])
    >>> registry = default_registry().add(CODEC_GROUP, 'foo', CodecPlugin(Foo, lambda c, obj: c.encode(obj.x)))
    >>> Codec(registry).encode(Foo(1j))
    [0.0, 1.0]

Other packages can declare plugins under the meromorphic_envelopes.codec
group of entry points.
"""

import json
from importlib import resources

import numpy as np
from attrs import define, field

from meromorphic_envelopes.connection import GaugePotential, Pole
from meromorphic_envelopes.lie_numerics import AdjointElement, AlgebraSpec, GroupElement
from meromorphic_envelopes.quantum_homology import BoundaryReport, Cell, QuantumDivisor, QuantumTrajectory
from meromorphic_envelopes.registry import CODEC_GROUP, Registry
from meromorphic_envelopes.sphere_geometry import Arc, ComplexPath, Polyline
from meromorphic_envelopes.transport import FlatSectionGerm, GrowthFit, TransportResult


@define(frozen=True)
class CodecPlugin:
    """Plugin encoding certain types of value."""

    types = field(converter=lambda t: t if isinstance(t, tuple) else (t,))
    encode = field(repr=False)

    def priority(self, obj):
        """Priority of an object from 0 (highest) to -inf (lowest)."""
        mro = obj.__class__.__mro__
        priorities = [-mro.index(t) for t in self.types if t in mro]
        return max(priorities, default=float("-inf"))


def _pair(value):
    value = complex(value)
    return [value.real, value.imag]


complex_codec = CodecPlugin((complex, np.complexfloating), lambda c, obj: _pair(obj))

scalar_codec = CodecPlugin((bool, int, float, str, type(None)), lambda c, obj: obj)

numpy_scalar_codec = CodecPlugin((np.bool_, np.integer, np.floating), lambda c, obj: obj.item())

matrix_codec = CodecPlugin(
    np.ndarray,
    lambda c, obj: _pair(obj) if obj.ndim == 0 else [c.encode(np.asarray(row)) for row in obj],
)

sequence_codec = CodecPlugin((list, tuple), lambda c, obj: [c.encode(item) for item in obj])

mapping_codec = CodecPlugin(dict, lambda c, obj: {str(key): c.encode(value) for key, value in obj.items()})

algebra_codec = CodecPlugin(AlgebraSpec, lambda c, obj: {"family": obj.family, "n": obj.n})

element_codec = CodecPlugin((AdjointElement, GroupElement), lambda c, obj: c.encode(obj.entries))

polyline_codec = CodecPlugin(
    Polyline,
    lambda c, obj: {"type": "polyline", "points": [_pair(point) for point in obj.points]},
)

arc_codec = CodecPlugin(
    Arc,
    lambda c, obj: {
        "type": "arc",
        "center": _pair(obj.center),
        "radius": obj.radius,
        "from_angle": obj.angle_from,
        "to_angle": obj.angle_to,
    },
)

path_codec = CodecPlugin(ComplexPath, lambda c, obj: {"segments": c.encode(list(obj.segments))})

connection_codec = CodecPlugin(
    GaugePotential,
    lambda c, obj: {
        "algebra": c.encode(obj.algebra),
        "poles": [{"position": _pair(pole.position), "laurent": c.encode(pole.laurent)} for pole in obj.poles],
        "poly_tail": c.encode(obj.poly_tail),
    },
)


def _encode_germ(codec, germ):
    data = {"anchor": _pair(germ.anchor), "value": codec.encode(germ.value)}
    if germ.kind != "adjoint":
        data["kind"] = germ.kind

    return data


germ_codec = CodecPlugin(FlatSectionGerm, _encode_germ)

cell_codec = CodecPlugin(
    Cell,
    lambda c, obj: {"weight": _pair(obj.weight), "path": c.encode(obj.path), "germ": c.encode(obj.germ)},
)

trajectory_codec = CodecPlugin(QuantumTrajectory, lambda c, obj: {"cells": c.encode(list(obj.cells))})

divisor_codec = CodecPlugin(
    QuantumDivisor,
    lambda c, obj: {
        "terms": [{"point": _pair(point), "coefficient": c.encode(value)} for point, value in obj.terms],
    },
)

boundary_codec = CodecPlugin(
    BoundaryReport,
    lambda c, obj: {
        "divisor": c.encode(obj.divisor),
        "dropped": [{"point": _pair(point), "reason": reason} for point, reason in obj.dropped_endpoints],
    },
)

transport_codec = CodecPlugin(
    TransportResult,
    lambda c, obj: {
        "end_value": c.encode(obj.end_value),
        "flatness_residual": obj.flatness_residual,
        "steps": obj.steps,
    },
)

growth_codec = CodecPlugin(
    GrowthFit,
    lambda c, obj: {
        "pole": _pair(obj.pole),
        "radii": [float(r) for r in obj.radii],
        "norms": [float(norm) for norm in obj.norms],
        "slope": obj.slope,
        "exponent": obj.exponent,
        "pole_order": obj.pole_order,
        "closure_residual": obj.closure_residual,
    },
)


BUILTIN_CODECS = {
    "algebra": algebra_codec,
    "arc": arc_codec,
    "boundary": boundary_codec,
    "cell": cell_codec,
    "complex": complex_codec,
    "connection": connection_codec,
    "divisor": divisor_codec,
    "element": element_codec,
    "germ": germ_codec,
    "growth": growth_codec,
    "mapping": mapping_codec,
    "matrix": matrix_codec,
    "numpy_scalar": numpy_scalar_codec,
    "path": path_codec,
    "polyline": polyline_codec,
    "scalar": scalar_codec,
    "sequence": sequence_codec,
    "trajectory": trajectory_codec,
    "transport": transport_codec,
}


def default_registry():
    return Registry(defaults={CODEC_GROUP: BUILTIN_CODECS})


@define(frozen=True)
class Codec:
    """Turn values into JSON compatible data, using plugins."""

    registry = field(factory=default_registry)

    def encode(self, obj):
        return self.get_plugin(obj).encode(self, obj)

    def get_plugin(self, obj):
        """Return the plugin for the most specific type of the object.

        :raises KeyError: If no plugin or more than one matches.
        """
        codecs = self.registry.entries(CODEC_GROUP)
        plugins = {name: plugin.priority(obj) for name, plugin in codecs.items()}
        if not plugins:
            raise KeyError("No codec plugins found")

        priority = max(plugins.values())
        if priority == float("-inf"):
            raise KeyError(f"No codec plugin found for {obj.__class__.__name__}")

        names = sorted(name for name, value in plugins.items() if value == priority)
        if len(names) > 1:
            raise KeyError(f"More than one codec plugin found for {obj.__class__.__name__}: {names}")

        return codecs[names[0]]


def encode(obj):
    return Codec().encode(obj)


def dumps(obj, codec=None):
    """Return canonical JSON: sorted keys and no whitespace."""
    codec = Codec() if codec is None else codec
    return json.dumps(codec.encode(obj), sort_keys=True, separators=(",", ":"))


def loads(text):
    """Parse JSON text.

    :raises ValueError: With the position of a syntax error.
    """
    return json.loads(text)


def load_json(path):
    with open(path) as f:
        return loads(f.read())


def load_fixture(name):
    """Parse one of the JSON fixtures shipped in the data directory."""
    return loads((resources.files("meromorphic_envelopes") / "data" / name).read_text())


def _require(data, key, name):
    if not isinstance(data, dict):
        raise ValueError(f"{name or 'document'} must be an object, got {data!r}")
    if key not in data:
        raise ValueError(f"{name}.{key} is missing" if name else f"{key} is missing")

    return data[key]


def _child(name, key):
    return f"{name}.{key}" if name else key


def decode_complex(value, name="value"):
    """Return a complex number from a number or an [re, im] pair.

    :raises ValueError: Naming the field otherwise.
    """
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (
        isinstance(value, list)
        and len(value) == 2
        and all(isinstance(part, (int, float)) and not isinstance(part, bool) for part in value)
    ):
        return complex(value[0], value[1])

    raise ValueError(f"{name} must be a number or an [re, im] pair, got {value!r}")


def decode_matrix(value, name="matrix", n=None):
    """Return a square complex matrix from rows of entries.

    :raises ValueError: Naming the field if it is not a square matrix.
    """
    if not isinstance(value, list) or not value or not all(isinstance(row, list) for row in value):
        raise ValueError(f"{name} must be a nonempty list of rows")

    size = len(value)
    if n is not None and size != n:
        raise ValueError(f"{name} must have {n} rows, got {size}")

    matrix = np.empty((size, size), dtype=complex)
    for i, row in enumerate(value):
        if len(row) != size:
            raise ValueError(f"{name}[{i}] must have {size} entries, got {len(row)}")
        for j, entry in enumerate(row):
            matrix[i, j] = decode_complex(entry, f"{name}[{i}][{j}]")

    return matrix


def decode_algebra(data, name="algebra"):
    family, n = _require(data, "family", name), _require(data, "n", name)
    if not isinstance(n, int) or isinstance(n, bool):
        raise ValueError(f"{name}.n must be an integer, got {n!r}")
    try:
        return AlgebraSpec(family, n)
    except ValueError as e:
        raise ValueError(f"{name}: {e}") from e


def _decode_segment(data, name):
    kind = _require(data, "type", name)
    if kind == "polyline":
        points = _require(data, "points", name)
        if not isinstance(points, list):
            raise ValueError(f"{name}.points must be a list")
        return Polyline([decode_complex(point, f"{name}.points[{i}]") for i, point in enumerate(points)])
    if kind == "arc":
        radius = _require(data, "radius", name)
        angles = [_require(data, key, name) for key in ("from_angle", "to_angle")]
        for key, value in zip(("radius", "from_angle", "to_angle"), (radius, *angles)):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ValueError(f"{name}.{key} must be a number, got {value!r}")
        return Arc(decode_complex(_require(data, "center", name), f"{name}.center"), radius, *angles)

    raise ValueError(f"{name}.type must be 'polyline' or 'arc', got {kind!r}")


def decode_path(data, name="path"):
    """Return a path from its segments.

    :raises ValueError: Naming the segment that is malformed or does not
        join the previous one.
    """
    segments = _require(data, "segments", name)
    if not isinstance(segments, list):
        raise ValueError(f"{_child(name, 'segments')} must be a list")

    decoded = [_decode_segment(segment, f"{_child(name, 'segments')}[{i}]") for i, segment in enumerate(segments)]
    try:
        return ComplexPath(decoded)
    except ValueError as e:
        raise ValueError(f"{name}: {e}") from e


def decode_connection(data):
    """Return a gauge potential.

    :raises ValueError: Naming the offending field, e.g. poles[0].laurent[1].
    """
    algebra = decode_algebra(_require(data, "algebra", ""))
    n = algebra.n
    poles = []
    for i, pole in enumerate(_require(data, "poles", "")):
        name = f"poles[{i}]"
        position = decode_complex(_require(pole, "position", name), f"{name}.position")
        laurent = _require(pole, "laurent", name)
        if not isinstance(laurent, list):
            raise ValueError(f"{name}.laurent must be a list of matrices")
        poles.append(Pole(position, [decode_matrix(a, f"{name}.laurent[{k}]", n) for k, a in enumerate(laurent)]))

    tail = data.get("poly_tail", [])
    if not isinstance(tail, list):
        raise ValueError("poly_tail must be a list of matrices")

    return GaugePotential(algebra, poles, [decode_matrix(b, f"poly_tail[{j}]", n) for j, b in enumerate(tail)])


def decode_germ(data, name="germ", n=None):
    anchor = decode_complex(_require(data, "anchor", name), f"{name}.anchor")
    value = decode_matrix(_require(data, "value", name), f"{name}.value", n)
    kind = data.get("kind", "adjoint")
    if kind not in ("adjoint", "fundamental"):
        raise ValueError(f"{name}.kind must be 'adjoint' or 'fundamental', got {kind!r}")

    return FlatSectionGerm(anchor, value, kind)


def decode_chain(data, phi, exclusion_radius=None):
    """Return a quantum trajectory over phi.

    :raises ValueError: Naming the offending cell field.
    """
    cells = _require(data, "cells", "")
    if not isinstance(cells, list):
        raise ValueError("cells must be a list")

    decoded = []
    for i, cell in enumerate(cells):
        name = f"cells[{i}]"
        if not isinstance(cell, dict):
            raise ValueError(f"{name} must be an object, got {cell!r}")
        weight = decode_complex(cell.get("weight", 1), f"{name}.weight")
        path = decode_path(_require(cell, "path", name), f"{name}.path")
        germ = decode_germ(_require(cell, "germ", name), f"{name}.germ", phi.algebra.n)
        try:
            decoded.append(Cell(weight, path, germ))
        except ValueError as e:
            raise ValueError(f"{name}: {e}") from e

    kwargs = {} if exclusion_radius is None else {"exclusion_radius": exclusion_radius}
    return QuantumTrajectory(decoded, phi, **kwargs)


def decode_divisor(data, name="divisor"):
    terms = _require(data, "terms", name)
    if not isinstance(terms, list):
        raise ValueError(f"{_child(name, 'terms')} must be a list")

    decoded = []
    for i, term in enumerate(terms):
        child = f"{_child(name, 'terms')}[{i}]"
        decoded.append((
            decode_complex(_require(term, "point", child), f"{child}.point"),
            decode_matrix(_require(term, "coefficient", child), f"{child}.coefficient"),
        ))

    return QuantumDivisor(decoded)

