"""Unit tests for the transport module."""

import cmath

import numpy as np
import pytest

from meromorphic_envelopes.connection import GaugePotential, fuchsian
from meromorphic_envelopes.errors import GateError, GeometryError, TransportError
from meromorphic_envelopes.lie_numerics import AlgebraSpec, adjoint_action, commutator, random_element
from meromorphic_envelopes.sphere_geometry import loop_around, polyline, segment
from meromorphic_envelopes.transport import (
    FlatSectionGerm,
    adjoint_monodromy_check,
    based_loops,
    growth_fit,
    integrate_along,
    laurent_section,
    monodromy,
    monodromy_product,
    transport_adjoint,
    transport_fundamental,
    transport_germ,
)
from tests.unit.oracles import constant_system_oracle

SL2 = AlgebraSpec("sl", 2)

E12 = np.array([[0, 1], [0, 0]], dtype=complex)

E21 = E12.T.copy()

H = np.diag([1.0, -1.0]).astype(complex)


def test_transport_zero_potential(seeded_rng):
    """Without potential the end value should be the initial value."""
    init = np.eye(2) + 0.1 * seeded_rng.standard_normal((2, 2))
    result = transport_fundamental(GaugePotential(SL2), polyline([0, 1, 1j]), init)
    assert np.allclose(result.end_value, init, atol=1e-12)


@pytest.mark.parametrize("z", [1.0, 1 + 1j, -0.5j])
def test_transport_constant_potential(z):
    """A constant potential should transport by its exponential."""
    b = np.array([[0.3, 1.0], [-0.5j, -0.3]])
    result = transport_fundamental(GaugePotential(SL2, poly_tail=[b]), segment(0, z))
    expected = constant_system_oracle(b, z)
    assert np.linalg.norm(result.end_value - expected) <= 1e-8 * np.linalg.norm(expected)


def test_transport_determinant(three_pole_connection):
    """sl2 transport should keep the determinant."""
    result = transport_fundamental(three_pole_connection, polyline([0.3 - 0.5j, -0.4 + 0.6j, 2j]))
    assert abs(np.linalg.det(result.end_value) - 1) <= 1e-8
    assert result.flatness_residual < 1e-6
    assert len(result.ts) == result.steps + 1


def test_transport_adjoint_zero(two_pole_connection):
    """The zero section should stay zero."""
    germ = FlatSectionGerm(2j, np.zeros((2, 2)))
    assert np.allclose(transport_adjoint(two_pole_connection, segment(2j, 2), germ).end_value, 0)


def test_transport_adjoint_central(three_pole_connection):
    """A central section should stay constant."""
    germ = FlatSectionGerm(2j, 3 * np.eye(2))
    result = transport_adjoint(three_pole_connection, polyline([2j, -2, -2j]), germ)
    assert np.allclose(result.values, 3 * np.eye(2), atol=1e-10)


def test_transport_adjoint_compatible(three_pole_connection, seeded_rng):
    """Adjoint transport should be conjugation by the fundamental transport."""
    path = polyline([0.3 - 0.5j, -0.4 + 0.6j, 2j])
    e = random_element(SL2, seeded_rng)
    end = transport_adjoint(three_pole_connection, path, FlatSectionGerm(path.start, e)).end_value
    expected = adjoint_action(transport_fundamental(three_pole_connection, path).end_value, e)
    assert np.linalg.norm(end - expected) <= 1e-8 * np.linalg.norm(expected)


def test_transport_adjoint_closed_form(two_pole_connection):
    """On the two pole fixture e12 scales like (z + 1)/(z - 1)."""
    a, b = 2j, 3 + 1j
    end = transport_adjoint(two_pole_connection, segment(a, b), FlatSectionGerm(a, E12)).end_value
    expected = E12 * (b + 1) / (b - 1) * (a - 1) / (a + 1)
    assert np.allclose(end, expected, atol=1e-9)


def test_transport_germ_anchor(two_pole_connection):
    """Germs anchored away from the path start should be rejected."""
    with pytest.raises(ValueError, match="anchored"):
        transport_adjoint(two_pole_connection, segment(2j, 2), FlatSectionGerm(0, E12))


def test_transport_germ_fundamental(two_pole_connection):
    """Fundamental germs should be transported by left multiplication."""
    germ = FlatSectionGerm(2j, np.eye(2), kind="fundamental")
    end = transport_germ(two_pole_connection, segment(2j, 2 + 2j), germ)
    assert np.allclose(end, transport_fundamental(two_pole_connection, segment(2j, 2 + 2j)).end_value)


def test_transport_through_pole(two_pole_connection):
    """Paths through an exclusion disk should be rejected."""
    with pytest.raises(TransportError, match="exclusion radius"):
        transport_fundamental(two_pole_connection, segment(0, 2))


def test_transport_concatenation(three_pole_connection):
    """Transport over joined paths should compose the transports."""
    phi = three_pole_connection
    first, second = segment(2j, -2 + 0.5j), segment(-2 + 0.5j, -2j)
    whole = transport_fundamental(phi, first + second).end_value
    expected = transport_fundamental(phi, second).end_value @ transport_fundamental(phi, first).end_value
    assert np.linalg.norm(whole - expected) <= 1e-8 * np.linalg.norm(expected)


def test_transport_homotopy(three_pole_connection):
    """Paths that sweep no pole between them should agree."""
    phi = three_pole_connection
    near = transport_fundamental(phi, polyline([2j, -2 + 0.5j, -2j])).end_value
    far = transport_fundamental(phi, polyline([2j, -3 + 1j, -3 - 1j, -2j])).end_value
    assert np.linalg.norm(near - far) <= 1e-7 * np.linalg.norm(near)


def test_transport_tolerance(two_pole_connection):
    """Tightening the tolerance should not make the closed form error worse."""
    a, b = 2j, 3 + 1j
    expected = E12 * (b + 1) / (b - 1) * (a - 1) / (a + 1)
    results = [
        transport_adjoint(two_pole_connection, segment(a, b), FlatSectionGerm(a, E12), tol) for tol in (1e-5, 1e-10)
    ]
    coarse, fine = (float(np.linalg.norm(result.end_value - expected)) for result in results)
    assert fine <= 1e-8
    assert fine <= coarse + 1e-12
    assert results[1].flatness_residual <= 2 * results[0].flatness_residual


def test_transport_determinant_gl(seeded_rng):
    """det should follow det(init) exp of the integrated trace at every step."""
    gl2 = AlgebraSpec("gl", 2)
    residues = [(-1, np.diag([0.3, 0.2])), (1, np.array([[0.1, 1.0], [0.0, 0.4j]]))]
    phi = fuchsian(gl2, residues)
    init = np.eye(2) + 0.1 * seeded_rng.standard_normal((2, 2))
    path = segment(2j, 3 + 1j)
    result = transport_fundamental(phi, path, init)
    for t, value in zip(result.ts, result.values):
        z = path.point(t)
        trace = sum(np.trace(a) * cmath.log((z - q) / (path.start - q)) for q, a in residues)
        expected = np.linalg.det(init) * cmath.exp(trace)
        assert abs(np.linalg.det(value) - expected) <= 1e-8 * abs(expected)


def test_transport_adjoint_compatible_seeded(two_pole_connection, seeded_rng):
    """Adjoint transport should agree with conjugation for 20 germs."""
    path = polyline([2j, -2 + 1j, -2 - 1j, 0.5 - 2j])
    g = transport_fundamental(two_pole_connection, path).end_value
    for _ in range(20):
        e = random_element(SL2, seeded_rng)
        end = transport_adjoint(two_pole_connection, path, FlatSectionGerm(path.start, e)).end_value
        expected = adjoint_action(g, e)
        assert np.linalg.norm(end - expected) <= 1e-8 * np.linalg.norm(expected)


def test_integrate_along_bracket(three_pole_connection, seeded_rng):
    """The integral of [Phi, M] should be the change of M."""
    path = polyline([2j, -2 + 0.5j, -0.5j])
    e = random_element(SL2, seeded_rng)
    phi = three_pole_connection
    germ = FlatSectionGerm(path.start, e)
    end, integral = integrate_along(phi, path, germ, lambda y, w: commutator(phi.evaluate(y), w))
    assert np.linalg.norm(integral - (end - e)) <= 1e-8 * max(1.0, np.linalg.norm(e))


def test_monodromy_no_pole(two_pole_connection):
    """A loop enclosing no pole should have trivial monodromy."""
    m = monodromy(two_pole_connection, loop_around(3j, 1))
    assert np.allclose(m.entries, np.eye(2), atol=1e-8)


def test_monodromy_single_pole(single_pole_connection):
    """The monodromy around diag(1/4, -1/4) should be diag(i, -i)."""
    m = monodromy(single_pole_connection, loop_around(0, 0.5))
    assert np.allclose(np.sort_complex(np.linalg.eigvals(m.entries)), np.sort_complex([1j, -1j]), atol=1e-6)
    assert np.allclose(m.entries, np.diag([1j, -1j]), atol=1e-8)


def test_monodromy_open_path(single_pole_connection):
    """Open paths should be rejected."""
    with pytest.raises(GeometryError, match="not closed"):
        monodromy(single_pole_connection, segment(1, 2))


@pytest.mark.parametrize("name", ["two_pole_connection", "three_pole_connection"])
def test_monodromy_product(name, request):
    """The ordered product of based monodromies should be trivial."""
    phi = request.getfixturevalue(name)
    product, factors = monodromy_product(phi)
    assert len(factors) == len(phi.poles)
    assert np.linalg.norm(product - np.eye(2)) <= 1e-6


def test_monodromy_determinants(three_pole_connection):
    """Each local monodromy of an sl2 system should have determinant one."""
    for factor in monodromy_product(three_pole_connection)[1]:
        assert abs(factor.det - 1) <= 1e-8


def test_based_loops(three_pole_connection):
    """Loops should share a basepoint below the poles and be ordered left to right."""
    basepoint, loops = based_loops(three_pole_connection)
    assert basepoint.imag < min(p.imag for p in three_pole_connection.pole_positions)
    assert [p for p, _ in loops] == [-1, 1j, 1]
    assert all(loop.is_closed and abs(loop.start - basepoint) < 1e-12 for _, loop in loops)


@pytest.mark.parametrize(
    "e, bound",
    [
        pytest.param(np.eye(2), 1e-8, id="central"),
        pytest.param(np.diag([0.25, -0.25]), 1e-6, id="residue"),
    ],
)
def test_adjoint_monodromy_check_commuting(single_pole_connection, e, bound):
    """Sections commuting with the monodromy should come back."""
    assert adjoint_monodromy_check(single_pole_connection, loop_around(0, 0.5), e) <= bound


def test_adjoint_monodromy_check_generic(single_pole_connection):
    """e12 should come back as -e12 around diag(1/4, -1/4)."""
    residual = adjoint_monodromy_check(single_pole_connection, loop_around(0, 0.5), E12)
    assert residual == pytest.approx(2, abs=1e-6)
    assert residual >= 1e-2


@pytest.mark.parametrize(
    "e, exponent",
    [
        pytest.param(E12, -1, id="pole"),
        pytest.param(H, 0, id="constant"),
        pytest.param(E21, 1, id="zero"),
    ],
)
def test_growth_fit(two_pole_connection, e, exponent):
    """Sections at a residue diag(-1/2, 1/2) should grow with integer exponents."""
    fit = growth_fit(two_pole_connection, 1, FlatSectionGerm(1.2, e), 0.1)
    assert fit.exponent == exponent
    assert fit.pole_order == max(0, -exponent)


def test_growth_fit_multivalued(three_pole_connection):
    """A section with nontrivial local monodromy should fail the gate."""
    with pytest.raises(GateError):
        growth_fit(three_pole_connection, -1, FlatSectionGerm(-0.8, E21), 0.1)


def test_laurent_section(two_pole_connection):
    """The Laurent model of e12 should reproduce its closed form."""
    laurent = laurent_section(two_pole_connection, 1, FlatSectionGerm(1.2, E12), 0.1, 1)
    scale = (1.2 - 1) / (1.2 + 1)
    for y in (1.05, 1 + 0.08j, 0.97 - 0.02j):
        assert np.allclose(laurent(y), E12 * scale * (y + 1) / (y - 1), atol=1e-8)
    assert np.allclose(laurent.evaluate(1, shift=1), 2 * scale * E12, atol=1e-8)
