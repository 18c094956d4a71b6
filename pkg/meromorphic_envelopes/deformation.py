"""Deformation potentials of closed quantum trajectories.

Pairing a cycle with the third-kind form (1/(y - x) - 1/(y - o)) dy gives
an adjoint valued function F(x) analytic off the cycle; its covariant
derivative dF + [F, Phi] is a deformation of the gauge potential.
"""

import logging
import math

import numpy as np
from attrs import define, field

from meromorphic_envelopes.connection import DeformedPotential
from meromorphic_envelopes.errors import GeometryError, NotACycleError
from meromorphic_envelopes.lie_numerics import commutator
from meromorphic_envelopes.quantum_homology import CYCLE_TOLERANCE, distance_to_support, is_cycle
from meromorphic_envelopes.sphere_geometry import ThirdKindForm
from meromorphic_envelopes.transport import DEFAULT_TOLERANCE, integrate_along

logger = logging.getLogger(__name__)

CLEARANCE = 1e-4
"""Smallest distance from x or o to the paths of the cycle."""

CAUCHY_NODES = 64


@define(frozen=True, eq=False)
class DeformationPotentialField:
    """The function x -> F(x) of a verified cycle, for a fixed reference point o."""

    cycle = field()
    o = field(converter=complex)
    tol = field(default=DEFAULT_TOLERANCE, converter=float)
    cycle_tolerance = field(default=CYCLE_TOLERANCE, converter=float)
    boundary_norm = field(init=False)

    @boundary_norm.default
    def _verify_cycle(self):
        closed, residual = is_cycle(self.cycle, self.cycle_tolerance, self.tol)
        if not closed:
            raise NotACycleError(f"Trajectory has a boundary of norm {residual:.3g}, it is not a cycle")

        return residual

    def __attrs_post_init__(self):
        if distance_to_support(self.cycle, self.o) <= CLEARANCE:
            raise GeometryError(f"Reference point {self.o} is within {CLEARANCE} of the cycle")

    @property
    def phi(self):
        return self.cycle.phi

    def forbidden_distance(self, x, poles=False):
        """Return the distance from x to the cycle, o and optionally the poles."""
        distances = [distance_to_support(self.cycle, x), abs(x - self.o)]
        if poles:
            distances.extend(abs(x - p) for p in self.phi.pole_positions)

        return min(distances, default=math.inf)

    def _check(self, x, poles=False):
        distance = self.forbidden_distance(x, poles)
        if distance <= CLEARANCE:
            raise GeometryError(f"Point {x} is within {distance:.3g} of the cycle, the reference point or a pole")

    def evaluate_many(self, xs):
        """Return F at every point, from one transport per cell."""
        xs = np.asarray(xs, dtype=complex).ravel()
        for x in xs:
            self._check(x)

        n = self.phi.algebra.n
        total = np.zeros((len(xs), n, n), dtype=complex)

        def density(y, w):
            return (1 / (y - xs) - 1 / (y - self.o))[:, None, None] * w

        for cell in self.cycle.cells:
            _, integral = integrate_along(
                self.phi,
                cell.path_from_anchor,
                cell.germ,
                density,
                self.tol,
                exclusion_radius=self.cycle.exclusion_radius,
            )
            total += cell.weight * (integral if cell.anchored_at_start else -integral)

        return total

    def __call__(self, x):
        return self.evaluate_many([x])[0]

    def _circle(self, x, poles):
        self._check(x, poles)
        radius = 0.5 * self.forbidden_distance(x, poles)
        offsets = radius * np.exp(2j * np.pi * np.arange(CAUCHY_NODES) / CAUCHY_NODES)
        return radius, offsets

    def derivative(self, x):
        """Return dF/dx from the Cauchy integral on a circle around x.

        The radius is half the distance to the nearest forbidden point.
        """
        x = complex(x)
        radius, offsets = self._circle(x, poles=False)
        values = self.evaluate_many(x + offsets)
        return np.mean(values * (offsets.conjugate() / radius**2)[:, None, None], axis=0)

    def derivative_fd(self, x, relative_step=1e-3):
        """Return dF/dx from fourth order central differences."""
        x = complex(x)
        h = relative_step * self.forbidden_distance(x)
        f2, f1, b1, b2 = self.evaluate_many([x + 2 * h, x + h, x - h, x - 2 * h])
        return (-f2 + 8 * f1 - 8 * b1 + b2) / (12 * h)

    def analyticity_residual(self, x):
        """Return how far the mean of F on a circle around x is from F(x)."""
        x = complex(x)
        _, offsets = self._circle(x, poles=False)
        values = self.evaluate_many([x, *(x + offsets)])
        return float(np.linalg.norm(np.mean(values[1:], axis=0) - values[0]))

    def direction(self, x):
        """Return the coefficient of dx of dF + [F, Phi] at x."""
        x = complex(x)
        radius, offsets = self._circle(x, poles=True)
        values = self.evaluate_many([x, *(x + offsets)])
        derivative = np.mean(values[1:] * (offsets.conjugate() / radius**2)[:, None, None], axis=0)
        return derivative + commutator(values[0], self.phi.evaluate(x))

    def deformed_potential(self, epsilon):
        return DeformedPotential(self.phi, self.direction, epsilon)


def deformation_potential(gamma, x, o, tol=DEFAULT_TOLERANCE):
    """Return F(x): the sum over cells of weight times the integral of the third-kind form times the section.

    :raises NotACycleError: If gamma has a boundary.
    :raises GeometryError: If x or o is too close to the cycle.
    """
    ThirdKindForm(x, o)
    return DeformationPotentialField(gamma, o, tol)(x)


def deform_direction(gamma, x, o, tol=DEFAULT_TOLERANCE):
    """Return the coefficient of dx of the deformation dF + [F, Phi] at x."""
    ThirdKindForm(x, o)
    return DeformationPotentialField(gamma, o, tol).direction(x)


def reference_shift_constant(gamma, o, o_prime, x_samples, tol=DEFAULT_TOLERANCE):
    """Return the mean change of F over the samples when o moves to o_prime, and its spread.

    :raises ValueError: Without samples.
    """
    if not len(x_samples):
        raise ValueError("Reference shift needs at least one sample point")

    before = DeformationPotentialField(gamma, o, tol).evaluate_many(x_samples)
    after = DeformationPotentialField(gamma, o_prime, tol).evaluate_many(x_samples)
    differences = after - before
    mean = differences.mean(axis=0)
    spread = max(float(np.linalg.norm(difference - mean)) for difference in differences)
    logger.debug("Reference shift spread %(spread).3g", {"spread": spread})
    return mean, spread


def homology_invariance_check(gamma, gamma_deformed, x, o, tol=DEFAULT_TOLERANCE):
    """Return the norm of the difference of F at x between two cycles."""
    first = DeformationPotentialField(gamma, o, tol)(x)
    second = DeformationPotentialField(gamma_deformed, o, tol)(x)
    return float(np.linalg.norm(first - second))
