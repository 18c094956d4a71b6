"""Adjoint flat sections as regularised integrals over chains ending at a point.

For the flat section M_E equal to E at a reference point, the chain
Gamma(z) runs from the anchor pole p to z and carries M_E. The
counterterm F(z) integrates [Phi, M_E] over Gamma(z); the divergent end
at p is regularised with the pole order found by the growth gate. Since
[Phi, M_E] dz = dM_E, the result is M_E(z) minus the regularised
boundary value of M_E at p, which is the constant term of its Laurent
expansion there.
"""

import logging

import numpy as np
from attrs import define, evolve, field

from meromorphic_envelopes.connection import pole_order
from meromorphic_envelopes.errors import GeometryError
from meromorphic_envelopes.lie_numerics import (
    KERNEL_THRESHOLD,
    algebra_basis,
    as_matrix,
    commutator,
    frozen_matrix,
    kernel_basis,
)
from meromorphic_envelopes.quantum_homology import QuantumDivisor, boundary_1, localized_boundary_trajectory, pole_gate
from meromorphic_envelopes.reg_integral import (
    AnalyticFunction,
    RegIntegralSpec,
    envelope_condition_residual,
    regularized_integral,
)
from meromorphic_envelopes.sphere_geometry import DEFAULT_EXCLUSION_RADIUS, JOIN_TOLERANCE, quad_complex, segment
from meromorphic_envelopes.transport import (
    DEFAULT_TOLERANCE,
    FlatSectionGerm,
    integrate_along,
    laurent_section,
    transport_adjoint,
)

logger = logging.getLogger(__name__)

FLATNESS_NODES = 16

FLATNESS_FLOOR = 1e-12
"""Below this scale the flatness residual is reported in absolute terms."""


def _points(values):
    return tuple(complex(value) for value in values)


def _same(a, b):
    return abs(a - b) <= JOIN_TOLERANCE * max(1.0, abs(a))


@define(frozen=True, eq=False)
class EnvelopeSectionSpec:
    """Section value E at the reference point, the anchor pole and the route from it.

    The reference defaults to the first route waypoint, or to the first
    target without a route.
    """

    phi = field()
    e = field(converter=frozen_matrix)
    anchor_pole = field(converter=complex)
    route = field(converter=_points, factory=tuple)
    z_targets = field(converter=_points, factory=tuple)
    reference = field(converter=complex)
    exclusion_radius = field(default=DEFAULT_EXCLUSION_RADIUS, converter=float)

    @reference.default
    def _default_reference(self):
        if self.route:
            return self.route[0]
        if self.z_targets:
            return self.z_targets[0]
        raise ValueError("Envelope sections need a reference point, a route or a target")

    def __attrs_post_init__(self):
        self.phi.algebra.validate(self.e, "E")
        self.phi.find_pole(self.anchor_pole)
        if self.phi.punctures(self.exclusion_radius).excluding(self.reference) is not None:
            raise GeometryError(f"Reference point {self.reference} lies inside an exclusion disk")

    def route_to(self, z):
        """The route waypoints, without trailing ones that coincide with z."""
        route = list(self.route)
        while route and _same(route[-1], z):
            route.pop()

        return route


def section_value(spec, z, tol=DEFAULT_TOLERANCE):
    """Return M_E(z), transported straight from the reference point."""
    z = complex(z)
    if _same(z, spec.reference):
        return np.array(spec.e)

    germ = FlatSectionGerm(spec.reference, spec.e)
    return transport_adjoint(
        spec.phi, segment(spec.reference, z), germ, tol, exclusion_radius=spec.exclusion_radius
    ).end_value


def envelope_trajectory(spec, z, tol=DEFAULT_TOLERANCE, check_gate=True):
    """Return Gamma(z): the cell from the anchor pole to z carrying M_E."""
    return localized_boundary_trajectory(
        spec.phi,
        spec.anchor_pole,
        z,
        section_value(spec, z, tol),
        spec.route_to(z),
        tol,
        spec.exclusion_radius,
        check_gate,
    )


@define(frozen=True, eq=False)
class RegularizedPole:
    """The regularised part of the integral of [Phi, M] near a pole.

    constant is the regularised integral from the pole to the label point
    plus the ordinary integral on to the model point, both computed from
    the Laurent model of the section.
    """

    gate = field()
    laurent = field(repr=False)
    inner = field(repr=False)
    constant = field(converter=frozen_matrix)

    @property
    def order(self):
        return self.inner.d

    @property
    def boundary_value(self):
        """Regularised value of the section at the pole."""
        return np.asarray(self.gate.model_germ.value) - self.constant


def regularize_pole(phi, gate, tol=DEFAULT_TOLERANCE):
    """Regularise the integral of [Phi, M] from the gate's pole to its model point.

    With m the pole order of the section and k that of Phi, the integrand
    times (y - p)^(m + k) is analytic on the model disk, so the divergent
    integral has order d = m + k - 1.

    :raises GateError: If the Laurent model does not close.
    :raises QuadratureError: If the regularised integral fails.
    """
    p = gate.pole
    m, k = gate.pole_order, pole_order(phi, p)
    laurent = laurent_section(phi, p, gate.model_germ, gate.model_radius, m, tol=tol)

    def scaled_bracket(y):
        return commutator(phi.evaluate(y) * (y - p) ** k, laurent.evaluate(y, shift=m))

    f = AnalyticFunction(scaled_bracket, p, gate.model_radius)
    inner = RegIntegralSpec(f, p, gate.label_point, m + k - 1)
    regularized = regularized_integral(inner, tol)

    a, b = gate.label_point, gate.model_point
    middle = quad_complex(
        lambda t: commutator(phi.evaluate(a + t * (b - a)), laurent(a + t * (b - a))) * (b - a),
        0.0,
        1.0,
        epsabs=1e-2 * tol,
        epsrel=tol,
    )
    logger.debug("Regularised the section at %(pole)s with order %(order)s", {"pole": p, "order": inner.d})
    return RegularizedPole(gate, laurent, inner, regularized + middle)


def _bracket_density(phi):
    def density(y, w):
        return commutator(phi.evaluate(y), w)

    return density


def _pole_cell_integral(phi, cell, pole, regularized, tol, exclusion_radius):
    """Integrate over a cell leaving the pole, the germ being at its far end."""
    if regularized is None or not _same(regularized.gate.pole, pole):
        gate = pole_gate(phi, pole, cell.path, cell.germ, tol, exclusion_radius)
        regularized = regularize_pole(phi, gate, tol)

    # On the model disk the section is single valued, so dM = [Phi, M] integrates to differences of the model.
    gate, laurent = regularized.gate, regularized.laurent
    t = gate.model_radius / cell.path.length
    if t >= 1 - 1e-9:
        return regularized.constant + np.asarray(cell.germ.value) - laurent(gate.model_point)

    rest = cell.path.split(t)[1].reversed()
    bridge = 0
    if not _same(rest.end, gate.model_point):
        bridge = laurent(rest.end) - laurent(gate.model_point)
    _, integral = integrate_along(phi, rest, cell.germ, _bracket_density(phi), tol, exclusion_radius=exclusion_radius)
    return regularized.constant + bridge - integral


def counterterm(phi, trajectory, tol=DEFAULT_TOLERANCE, regularized=None):
    """Return the integral of [Phi, M] over the trajectory, cell by cell.

    Each cell carries the section transported from its germ. A cell with
    an endpoint at a pole is regularised there; regularized may supply
    the regularisation of a pole shared by several evaluations.

    :raises GateError: If a section grows faster than a pole.
    """
    punctures = trajectory.punctures
    if regularized is None and len(trajectory.cells) == 1 and trajectory.gate is not None:
        regularized = regularize_pole(phi, trajectory.gate, tol)

    n = phi.algebra.n
    total = np.zeros((n, n), dtype=complex)
    for cell in trajectory.cells:
        start, end = punctures.excluding(cell.path.start), punctures.excluding(cell.path.end)
        if start is not None:
            value = _pole_cell_integral(phi, cell, start, regularized, tol, trajectory.exclusion_radius)
        elif end is not None:
            value = -_pole_cell_integral(phi, cell.reversed(), end, regularized, tol, trajectory.exclusion_radius)
        else:
            _, value = integrate_along(
                phi,
                cell.path_from_anchor,
                cell.germ,
                _bracket_density(phi),
                tol,
                exclusion_radius=trajectory.exclusion_radius,
            )
            if not cell.anchored_at_start:
                value = -value
        total += cell.weight * value

    return total


@define(frozen=True, eq=False)
class EnvelopeSectionField:
    """The map z -> envelope section, with the pole regularised once.

    The gate runs on the chain to the first target, or to the reference
    point without targets; every other target reuses its Laurent model.
    """

    spec = field()
    tol = field(default=DEFAULT_TOLERANCE, converter=float)
    pole = field(init=False)

    @pole.default
    def _regularize(self):
        z = self.spec.z_targets[0] if self.spec.z_targets else self.spec.reference
        gate = envelope_trajectory(self.spec, z, self.tol).gate
        return regularize_pole(self.spec.phi, gate, self.tol)

    @property
    def phi(self):
        return self.spec.phi

    def __call__(self, z):
        trajectory = envelope_trajectory(self.spec, z, self.tol, check_gate=False)
        return counterterm(self.phi, trajectory, self.tol, self.pole)

    def evaluate_many(self, zs):
        return [self(z) for z in zs]

    def parametric(self, z, zeta):
        """Return m(zE; zeta): the integral of dM_E from zeta to z plus F(zeta)."""
        if _same(z, zeta):
            return self(zeta)

        germ = FlatSectionGerm(zeta, section_value(self.spec, zeta, self.tol))
        _, increment = integrate_along(
            self.phi,
            segment(zeta, z),
            germ,
            _bracket_density(self.phi),
            self.tol,
            exclusion_radius=self.spec.exclusion_radius,
        )
        return increment + self(zeta)

    def flatness_residual(self, z, radius=None, nodes=FLATNESS_NODES):
        """Return the relative norm of dF - [Phi, F] at z.

        dF comes from the Cauchy integral on a circle around z, by default
        of a tenth of the distance to the nearest pole.
        """
        z = complex(z)
        if radius is None:
            radius = 0.1 * min(abs(z - p) for p in self.phi.pole_positions)

        offsets = radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
        values = np.array(self.evaluate_many(z + offsets))
        derivative = np.mean(values * (offsets.conjugate() / radius**2)[:, None, None], axis=0)
        bracket = commutator(self.phi.evaluate(z), self(z))
        residual = float(np.linalg.norm(derivative - bracket))
        scale = max(float(np.linalg.norm(derivative)), float(np.linalg.norm(bracket)))
        return residual / scale if scale > FLATNESS_FLOOR else residual


def envelope_section(spec, z, tol=DEFAULT_TOLERANCE):
    """Return the regularised integral of [Phi, M_E] over Gamma(z).

    :raises GateError: If M_E has worse than a pole at the anchor.
    :raises QuadratureError: If the regularisation fails.
    """
    trajectory = envelope_trajectory(spec, z, tol)
    return counterterm(spec.phi, trajectory, tol)


def envelope_sections(spec, tol=DEFAULT_TOLERANCE):
    """Return the envelope section at every target, regularising the pole once."""
    if not spec.z_targets:
        return []

    return EnvelopeSectionField(spec, tol).evaluate_many(spec.z_targets)


def parametric_solution(spec, z, zeta, tol=DEFAULT_TOLERANCE):
    """Return m(zE; zeta) = integral of dM_E from zeta to z + F(zeta).

    It equals F(zeta) at z = zeta and, as F - M_E is constant, does not
    depend on zeta.
    """
    return EnvelopeSectionField(spec, tol).parametric(complex(z), complex(zeta))


def envelope_flatness_residual(spec, z, tol=DEFAULT_TOLERANCE, radius=None):
    return EnvelopeSectionField(spec, tol).flatness_residual(z, radius)


def envelope_residual_scan(spec, z, q_values, tol=DEFAULT_TOLERANCE):
    """Return the envelope condition residual of the counter-termed family at each label.

    The family is that of the regularised integral of [Phi, M_E] at the
    anchor pole, for the chain to z; labels must lie within the inner
    radius of the pole. Residuals are O(|q - p|).

    :raises GeometryError: If a label is the pole or too far from it.
    :raises PoleError: If the anchor is not a pole.
    """
    spec = EnvelopeSectionSpec(
        spec.phi, spec.e, spec.anchor_pole, spec.route, [z], spec.reference, spec.exclusion_radius
    )
    regularized = EnvelopeSectionField(spec, tol).pole
    p, limit = regularized.gate.pole, regularized.gate.inner_radius
    residuals = []
    for q in q_values:
        distance = abs(complex(q) - p)
        if not 0 < distance <= limit:
            raise GeometryError(f"Label {q} must lie within {limit:.3g} of the pole {p} and differ from it")
        residuals.append(float(np.linalg.norm(envelope_condition_residual(regularized.inner, q))))

    logger.debug("Envelope residuals %(residuals)s", {"residuals": residuals})
    return residuals


def boundary_check(spec, z, tol=DEFAULT_TOLERANCE):
    """Return the norm of the boundary of Gamma(z) minus z times M_E(z)."""
    trajectory = envelope_trajectory(spec, z, tol, check_gate=False)
    expected = QuantumDivisor([(complex(z), -as_matrix(section_value(spec, z, tol)))])
    return (boundary_1(trajectory, tol).divisor + expected).norm


def vanishing_subspace(spec, tol=DEFAULT_TOLERANCE, threshold=KERNEL_THRESHOLD):
    """Return a basis of the values E whose section has zero regularised boundary value.

    The boundary value is linear in E; for E in its kernel the envelope
    section is M_E itself, and so solves the adjoint equation.

    :raises GateError: If the section of a basis element grows faster than a pole.
    """
    basis = algebra_basis(spec.phi.algebra)
    values = [EnvelopeSectionField(evolve(spec, e=element), tol).pole.boundary_value for element in basis]
    stacked = np.column_stack([np.asarray(value).ravel() for value in values])
    # Columns are images of unit basis elements.
    kernel = kernel_basis(stacked, threshold, scale=1.0)
    logger.debug(
        "Vanishing subspace at %(pole)s has dimension %(dimension)s",
        {"pole": spec.anchor_pole, "dimension": kernel.shape[1]},
    )
    return [sum(c * element for c, element in zip(kernel[:, k], basis)) for k in range(kernel.shape[1])]
