"""Unit tests for the codec module."""

import json

import numpy as np
import pytest
from attrs import make_class

from meromorphic_envelopes.codec import (
    Codec,
    CodecPlugin,
    decode_chain,
    decode_complex,
    decode_connection,
    decode_divisor,
    decode_germ,
    decode_matrix,
    decode_path,
    default_registry,
    dumps,
    encode,
    load_fixture,
    loads,
)
from meromorphic_envelopes.lie_numerics import AlgebraSpec, GroupElement
from meromorphic_envelopes.quantum_homology import QuantumDivisor, boundary_1, is_cycle
from meromorphic_envelopes.registry import CODEC_GROUP, Registry
from meromorphic_envelopes.sphere_geometry import loop_around, polyline
from meromorphic_envelopes.transport import FlatSectionGerm

Foo = make_class("Foo", ["x"])

E12 = np.array([[0, 1], [0, 0]], dtype=complex)


@pytest.mark.parametrize(
    "obj, text",
    [
        (1 + 2j, "[1.0,2.0]"),
        (np.complex128(2 - 1j), "[2.0,-1.0]"),
        (np.float64(0.5), "0.5"),
        (np.int64(3), "3"),
        (True, "true"),
        (None, "null"),
        ({"b": 1, "a": 1j}, '{"a":[0.0,1.0],"b":1}'),
        ((1, "x"), '[1,"x"]'),
        (np.eye(1), "[[[1.0,0.0]]]"),
        (AlgebraSpec("sl", 2), '{"family":"sl","n":2}'),
    ],
)
def test_dumps(obj, text):
    """Values should be written as canonical JSON."""
    assert dumps(obj) == text


def test_dumps_group_element():
    """Group elements should be written as their matrices."""
    assert json.loads(dumps(GroupElement(np.eye(2)))) == [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]


def test_dumps_germ_kind():
    """The kind of a germ should only be written when it is not adjoint."""
    assert "kind" not in encode(FlatSectionGerm(0, E12))
    assert encode(FlatSectionGerm(0, np.eye(2), kind="fundamental"))["kind"] == "fundamental"


@pytest.mark.parametrize(
    "plugin, obj, priority",
    [
        (CodecPlugin(int, None), True, -1),
        (CodecPlugin(bool, None), True, 0),
        (CodecPlugin((str, bool), None), True, 0),
        (CodecPlugin(str, None), True, float("-inf")),
        (CodecPlugin(object, None), 1, -1),
    ],
)
def test_codec_plugin_priority(plugin, obj, priority):
    """The priority should be minus the distance in the method resolution order."""
    assert plugin.priority(obj) == priority


def test_codec_plugin_types():
    """A single type should be wrapped in a tuple."""
    assert CodecPlugin(int, None).types == (int,)


def test_codec_extension():
    """Plugins added to the registry should be used."""
    registry = default_registry().add(CODEC_GROUP, "foo", CodecPlugin(Foo, lambda c, obj: c.encode(obj.x)))
    assert dumps(Foo(2j), Codec(registry)) == "[0.0,2.0]"


def test_codec_tie():
    """Two plugins with the same priority should be refused."""
    registry = Registry(groups={CODEC_GROUP: {"a": CodecPlugin(Foo, None), "b": CodecPlugin(Foo, None)}})
    with pytest.raises(KeyError, match="More than one"):
        Codec(registry).encode(Foo(1))


def test_codec_unknown():
    """Values without a plugin should be refused."""
    with pytest.raises(KeyError, match="Foo"):
        encode(Foo(1))


def test_codec_empty():
    """A registry without codecs cannot encode anything."""
    with pytest.raises(KeyError, match="No codec plugins"):
        Codec(Registry(groups={CODEC_GROUP: {}})).encode(1)


@pytest.mark.parametrize(
    "value, expected",
    [
        (2, 2),
        (-0.5, -0.5),
        ([1, -2], 1 - 2j),
        ([0.5, 0], 0.5),
    ],
)
def test_decode_complex(value, expected):
    """Numbers and pairs should both be accepted."""
    assert decode_complex(value) == expected


@pytest.mark.parametrize("value", [True, "1", [1], [1, 2, 3], [1, None], None])
def test_decode_complex_error(value):
    """Anything else should be refused naming the field."""
    with pytest.raises(ValueError, match="weight"):
        decode_complex(value, "weight")


@pytest.mark.parametrize(
    "value, message",
    [
        pytest.param([], "nonempty", id="empty"),
        pytest.param([[1, 2]], r"m\[0\] must have 1 entries", id="ragged"),
        pytest.param([[1, 2], [3]], r"m\[1\] must have 2", id="short-row"),
        pytest.param([[1, "x"], [0, 0]], r"m\[0\]\[1\]", id="entry"),
    ],
)
def test_decode_matrix_error(value, message):
    """Malformed matrices should be refused naming the offending row or entry."""
    with pytest.raises(ValueError, match=message):
        decode_matrix(value, "m")


def test_decode_matrix_size():
    """The expected size should be enforced."""
    with pytest.raises(ValueError, match="must have 2 rows"):
        decode_matrix([[1]], "m", 2)


def test_connection_round_trip():
    """A decoded fixture should be written back unchanged."""
    data = load_fixture("three_pole_sl2.json")
    phi = decode_connection(data)
    again = decode_connection(loads(dumps(phi)))
    assert again.pole_positions == phi.pole_positions
    assert all(
        np.array_equal(a, b) for p, q in zip(phi.poles, again.poles) for a, b in zip(p.laurent, q.laurent)
    )


@pytest.mark.parametrize(
    "mutate, message",
    [
        pytest.param(lambda data: data.pop("algebra"), "algebra is missing", id="algebra"),
        pytest.param(lambda data: data["algebra"].update(n="2"), "algebra.n", id="rank"),
        pytest.param(lambda data: data["algebra"].update(family="so"), "algebra", id="family"),
        pytest.param(lambda data: data["poles"][0].pop("position"), r"poles\[0\].position", id="position"),
        pytest.param(
            lambda data: data["poles"][0]["laurent"].append([[1, 0]]),
            r"poles\[0\].laurent\[1\]",
            id="laurent",
        ),
        pytest.param(lambda data: data.update(poly_tail={}), "poly_tail", id="tail"),
    ],
)
def test_decode_connection_error(mutate, message):
    """Malformed connections should be refused naming the field."""
    data = load_fixture("two_pole_sl2.json")
    mutate(data)
    with pytest.raises(ValueError, match=message):
        decode_connection(data)


def test_decode_connection_not_traceless():
    """sl residues with a trace should be refused."""
    data = load_fixture("two_pole_sl2.json")
    data["poles"][0]["laurent"][0][1][1] = [0.5, 0.0]
    with pytest.raises(ValueError, match="traceless"):
        decode_connection(data)


@pytest.mark.parametrize("name", ["around_minus_one", "around_one", "around_both"])
def test_decode_loops(name):
    """The shipped loops should be closed and survive a round trip."""
    path = decode_path(load_fixture("loops.json")[name])
    assert path.is_closed
    again = decode_path(loads(dumps(path)))
    assert abs(again.start - path.start) < 1e-15
    assert again.length == pytest.approx(path.length)


def test_path_round_trip():
    """Paths mixing lines and arcs should keep their segments."""
    path = polyline([0, 1j, 1 + 1j]) + loop_around(1 + 1.5j, 0.5, basepoint_angle=-np.pi / 2)
    again = decode_path(loads(dumps(path)))
    assert len(again.segments) == len(path.segments)
    assert abs(again.end - path.end) < 1e-12


@pytest.mark.parametrize(
    "data, message",
    [
        pytest.param({}, "segments is missing", id="missing"),
        pytest.param({"segments": [{"type": "spline"}]}, r"segments\[0\].type", id="type"),
        pytest.param(
            {"segments": [{"type": "arc", "center": [0, 0], "radius": "1", "from_angle": 0, "to_angle": 1}]},
            r"segments\[0\].radius",
            id="radius",
        ),
        pytest.param(
            {"segments": [{"type": "polyline", "points": [[0, 0], [1, 0]]}, {"type": "polyline", "points": [2, 3]}]},
            "path",
            id="gap",
        ),
    ],
)
def test_decode_path_error(data, message):
    """Malformed paths should be refused naming the segment."""
    with pytest.raises(ValueError, match=message):
        decode_path(data)


def test_decode_reference_chain(two_pole_connection):
    """The shipped chain should be a cycle on the two pole fixture."""
    gamma = decode_chain(load_fixture("reference_chain.json"), two_pole_connection)
    assert [cell.weight for cell in gamma.cells] == [1, 0.5]
    assert is_cycle(gamma)[0]


def test_chain_round_trip(two_pole_connection):
    """Chains should keep their boundary through a round trip."""
    gamma = decode_chain(load_fixture("reference_chain.json"), two_pole_connection)
    again = decode_chain(loads(dumps(gamma)), two_pole_connection)
    assert (boundary_1(gamma).divisor + boundary_1(again).divisor.scaled(-1)).norm < 1e-12


@pytest.mark.parametrize(
    "mutate, message",
    [
        pytest.param(lambda cell: cell.update(weight="1"), r"cells\[0\].weight", id="weight"),
        pytest.param(lambda cell: cell.pop("path"), r"cells\[0\].path is missing", id="path"),
        pytest.param(lambda cell: cell["germ"].update(kind="other"), r"cells\[0\].germ.kind", id="kind"),
        pytest.param(lambda cell: cell["germ"].update(anchor=[7, 7]), r"cells\[0\]", id="anchor"),
        pytest.param(lambda cell: cell["germ"].update(value=[[1]]), r"cells\[0\].germ.value", id="size"),
    ],
)
def test_decode_chain_error(two_pole_connection, mutate, message):
    """Malformed cells should be refused naming the field."""
    data = load_fixture("reference_chain.json")
    mutate(data["cells"][0])
    with pytest.raises(ValueError, match=message):
        decode_chain(data, two_pole_connection)


def test_decode_germ():
    """Germs should default to the adjoint kind."""
    germ = decode_germ({"anchor": [1, 0], "value": [[1, 0], [0, -1]]})
    assert germ.kind == "adjoint"
    assert germ.anchor == 1


def test_divisor_round_trip():
    """Divisors should keep their terms."""
    divisor = QuantumDivisor([(1j, E12), (2, -E12)])
    again = decode_divisor(loads(dumps(divisor)))
    assert (again + divisor.scaled(-1)).norm == 0


def test_loads_error():
    """Syntax errors should raise ValueError."""
    with pytest.raises(ValueError):
        loads("{")
