"""Meromorphic gauge potentials on the sphere.

A potential is stored by its Laurent data at the poles plus a polynomial
tail, and evaluates to the coefficient of dz:

    >>> import numpy as np
    >>> from meromorphic_envelopes.lie_numerics import AlgebraSpec
    >>> a = np.diag([0.5, -0.5])
    >>> phi = fuchsian(AlgebraSpec("sl", 2), [(1, a), (-1, -a)])
    >>> np.allclose(potential_eval(phi, 0), -2 * a)
    True
    >>> is_fuchsian(phi)
    True
"""

import logging

import numpy as np
from attrs import define, field
from attrs.validators import instance_of

from meromorphic_envelopes.errors import PoleError
from meromorphic_envelopes.lie_numerics import AlgebraSpec, as_matrix, frozen_matrix
from meromorphic_envelopes.sphere_geometry import DEFAULT_EXCLUSION_RADIUS, PunctureSet

logger = logging.getLogger(__name__)

POLE_TOLERANCE = 1e-12
"""Distance under which a point counts as a pole position."""


def _matrix_tuple(values):
    return tuple(frozen_matrix(value) for value in values)


@define(frozen=True, eq=False)
class Pole:
    """Pole position with Laurent coefficients A_1, ..., A_n of (z - p)^-k."""

    position = field(converter=complex)
    laurent = field(converter=_matrix_tuple)

    @property
    def order(self):
        return len(self.laurent)


def _pole_tuple(values):
    return tuple(value if isinstance(value, Pole) else Pole(*value) for value in values)


@define(frozen=True, eq=False)
class GaugePotential:
    """Rational matrix one-form given by poles and a polynomial tail."""

    algebra = field(validator=instance_of(AlgebraSpec))
    poles = field(converter=_pole_tuple, factory=tuple)
    poly_tail = field(converter=_matrix_tuple, factory=tuple)

    def __attrs_post_init__(self):
        for i, pole in enumerate(self.poles):
            if not pole.laurent:
                raise ValueError(f"poles[{i}] has no Laurent coefficients")
            for k, coefficient in enumerate(pole.laurent):
                self.algebra.validate(coefficient, f"poles[{i}].laurent[{k}]")
            if not np.any(pole.laurent[-1]):
                raise ValueError(f"poles[{i}].laurent[{pole.order - 1}] is the top coefficient and must be nonzero")
            for j, other in enumerate(self.poles[:i]):
                if abs(pole.position - other.position) <= POLE_TOLERANCE:
                    raise ValueError(f"poles[{i}] and poles[{j}] share the position {pole.position}")

        for j, coefficient in enumerate(self.poly_tail):
            self.algebra.validate(coefficient, f"poly_tail[{j}]")

    @property
    def pole_positions(self):
        return tuple(pole.position for pole in self.poles)

    def punctures(self, exclusion_radius=DEFAULT_EXCLUSION_RADIUS):
        return PunctureSet(self.pole_positions, exclusion_radius)

    def find_pole(self, p):
        """Return the pole declared at p.

        :raises PoleError: If no pole is declared there.
        """
        for pole in self.poles:
            if abs(pole.position - p) <= POLE_TOLERANCE:
                return pole

        raise PoleError(f"No pole is declared at {p}")

    def evaluate(self, z):
        return potential_eval(self, z)


@define(frozen=True, eq=False)
class DeformedPotential:
    """First order deformation base + epsilon * direction of a potential."""

    base = field()
    direction = field(repr=False)
    epsilon = field(converter=float)

    @property
    def algebra(self):
        return self.base.algebra

    @property
    def pole_positions(self):
        return self.base.pole_positions

    def punctures(self, exclusion_radius=DEFAULT_EXCLUSION_RADIUS):
        return self.base.punctures(exclusion_radius)

    def find_pole(self, p):
        return self.base.find_pole(p)

    def evaluate(self, z):
        return self.base.evaluate(z) + self.epsilon * as_matrix(self.direction(z))


def fuchsian(algebra, residues, poly_tail=()):
    """Return the potential with simple poles from (position, residue) pairs."""
    return GaugePotential(algebra, [Pole(p, [a]) for p, a in residues], poly_tail)


def potential_eval(phi, z):
    """Return the coefficient of dz of the potential at z.

    :raises PoleError: If z is a pole position.
    """
    z = complex(z)
    n = phi.algebra.n
    value = np.zeros((n, n), dtype=complex)
    for pole in phi.poles:
        offset = z - pole.position
        if abs(offset) <= POLE_TOLERANCE:
            raise PoleError(f"Potential evaluated at its pole {pole.position}")
        w = 1 / offset
        power = w
        for coefficient in pole.laurent:
            value += coefficient * power
            power *= w

    power = 1
    for coefficient in phi.poly_tail:
        value += coefficient * power
        power *= z

    return value


def residue(phi, p, k=1):
    """Return the declared Laurent coefficient A_k of (z - p)^-k.

    :raises PoleError: If p is not a declared pole.
    :raises ValueError: If k is outside 1..n_p.
    """
    pole = phi.find_pole(p)
    if not 1 <= k <= pole.order:
        raise ValueError(f"Laurent order must lie in 1..{pole.order} at {p}, got {k}")

    return np.array(pole.laurent[k - 1])


def cauchy_laurent_coefficient(phi, p, k=1, radius=None, nodes=256):
    """Return (1/2 pi i) times the contour integral of phi(z) (z - p)^(k-1) dz.

    The trapezoid rule on the circle around p is spectrally accurate;
    the default radius is half the distance to the nearest other pole.
    """
    if radius is None:
        others = [abs(q - p) for q in phi.pole_positions if abs(q - p) > POLE_TOLERANCE]
        radius = 0.5 * min(others) if others else 1.0

    angles = 2 * np.pi * np.arange(nodes) / nodes
    offsets = radius * np.exp(1j * angles)
    samples = [potential_eval(phi, p + w) * w**k for w in offsets]
    return np.mean(samples, axis=0)


def is_fuchsian(phi):
    """Whether every pole is simple and there is no tail, so infinity is regular singular too."""
    return all(pole.order == 1 for pole in phi.poles) and not phi.poly_tail


def sum_of_residues(phi):
    n = phi.algebra.n
    return sum((np.array(pole.laurent[0]) for pole in phi.poles), np.zeros((n, n), dtype=complex))


def pole_order(phi, p):
    """Return the order of the pole at p, 0 when p is not a pole."""
    try:
        return phi.find_pole(p).order
    except PoleError:
        return 0
