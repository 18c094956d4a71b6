"""Unit tests for the connection module."""

import numpy as np
import pytest

from meromorphic_envelopes.connection import (
    DeformedPotential,
    GaugePotential,
    Pole,
    cauchy_laurent_coefficient,
    fuchsian,
    is_fuchsian,
    pole_order,
    potential_eval,
    residue,
    sum_of_residues,
)
from meromorphic_envelopes.errors import PoleError
from meromorphic_envelopes.lie_numerics import AlgebraSpec, random_element

SL2 = AlgebraSpec("sl", 2)

A = np.diag([0.5, -0.5])

B = np.array([[0, 1], [1, 0]], dtype=complex)


def test_potential_eval_single_pole():
    """A simple pole at 0 evaluated at 2 should give A/2."""
    assert np.allclose(potential_eval(fuchsian(SL2, [(0, A)]), 2), A / 2)


def test_potential_eval_two_poles():
    """Opposite residues at 1 and -1 should give -2A at 0."""
    assert np.allclose(potential_eval(fuchsian(SL2, [(1, A), (-1, -A)]), 0), -2 * A)


def test_potential_eval_tail():
    """Without poles the potential is its polynomial tail."""
    phi = GaugePotential(SL2, poly_tail=[B, A])
    assert np.allclose(potential_eval(phi, 0), B)
    assert np.allclose(potential_eval(phi, 2), B + 2 * A)


def test_potential_eval_higher_order():
    """Higher Laurent coefficients should come with higher inverse powers."""
    phi = GaugePotential(SL2, [Pole(0, [A, B])])
    assert np.allclose(potential_eval(phi, 0.5), 2 * A + 4 * B)


def test_potential_eval_at_pole():
    """Evaluating at a pole should raise."""
    with pytest.raises(PoleError):
        potential_eval(fuchsian(SL2, [(0, A)]), 0)


def test_residue():
    """Declared coefficients should be returned by order."""
    phi = GaugePotential(SL2, [Pole(1, [A, B])])
    assert np.allclose(residue(phi, 1), A)
    assert np.allclose(residue(phi, 1, 2), B)
    with pytest.raises(ValueError):
        residue(phi, 1, 3)
    with pytest.raises(PoleError):
        residue(phi, 2)


def test_cauchy_laurent_coefficient(seeded_rng):
    """Contour integrals should recover random Fuchsian residues."""
    residues = [(p, random_element(SL2, seeded_rng)) for p in (-1, 1j, 2)]
    phi = fuchsian(SL2, residues)
    for p, a in residues:
        assert np.linalg.norm(cauchy_laurent_coefficient(phi, p) - a) <= 1e-9 * np.linalg.norm(a)


def test_cauchy_laurent_coefficient_second_order():
    """The second Laurent coefficient should come from the weight (z - p)."""
    phi = GaugePotential(SL2, [Pole(0, [A, B]), Pole(3, [A])])
    assert np.allclose(cauchy_laurent_coefficient(phi, 0, 2), B, atol=1e-12)


@pytest.mark.parametrize(
    "phi, expected",
    [
        pytest.param(fuchsian(SL2, [(0, A), (1, -A)]), True, id="simple"),
        pytest.param(GaugePotential(SL2, [Pole(0, [A, B])]), False, id="double"),
        pytest.param(fuchsian(SL2, [(0, A)], poly_tail=[B]), False, id="tail"),
    ],
)
def test_is_fuchsian(phi, expected):
    """Only simple poles without tail should be Fuchsian."""
    assert is_fuchsian(phi) is expected


def test_sum_of_residues(two_pole_connection, three_pole_connection):
    """The shipped fixtures should have residues summing to zero."""
    assert np.allclose(sum_of_residues(two_pole_connection), 0)
    assert np.allclose(sum_of_residues(three_pole_connection), 0)


def test_pole_order():
    """Regular points should have order 0."""
    phi = GaugePotential(SL2, [Pole(0, [A, B])])
    assert pole_order(phi, 0) == 2
    assert pole_order(phi, 1) == 0


@pytest.mark.parametrize(
    "poles, message",
    [
        pytest.param([Pole(0, [])], "no Laurent", id="empty"),
        pytest.param([Pole(0, [A, np.zeros((2, 2))])], "top coefficient", id="zero-top"),
        pytest.param([Pole(0, [A]), Pole(0, [-A])], "share the position", id="duplicate"),
        pytest.param([Pole(0, [np.eye(2)])], "traceless", id="trace"),
    ],
)
def test_gauge_potential_validation(poles, message):
    """Invalid Laurent data should be rejected naming the field."""
    with pytest.raises(ValueError, match=message):
        GaugePotential(SL2, poles)


def test_deformed_potential():
    """A deformed potential should add epsilon times the direction."""
    base = fuchsian(SL2, [(0, A)])
    deformed = DeformedPotential(base, lambda z: B, 0.1)
    assert np.allclose(deformed.evaluate(1), A + 0.1 * B)
    assert deformed.pole_positions == base.pole_positions
