"""Chains with flat adjoint coefficients and their boundary.

A quantum trajectory is a formal sum of cells, each a weighted path
carrying a flat adjoint section given by its germ at one endpoint. Its
boundary is the quantum divisor of end values minus start values, where
endpoints inside the exclusion disk of a pole are dropped:

    >>> import numpy as np
    >>> from meromorphic_envelopes.connection import GaugePotential
    >>> from meromorphic_envelopes.lie_numerics import AlgebraSpec
    >>> from meromorphic_envelopes.sphere_geometry import segment
    >>> from meromorphic_envelopes.transport import FlatSectionGerm
    >>> e = np.array([[0, 1], [0, 0]])
    >>> phi = GaugePotential(AlgebraSpec("sl", 2))
    >>> gamma = QuantumTrajectory([Cell(1, segment(0, 1), FlatSectionGerm(0, e))], phi)
    >>> boundary = boundary_1(gamma).divisor
    >>> boundary.coefficient_at(1).tolist() == e.tolist()
    True
    >>> boundary.coefficient_at(0).tolist() == (-e).tolist()
    True
"""

import logging
import math

import numpy as np
from attrs import define, field

from meromorphic_envelopes.errors import GeometryError
from meromorphic_envelopes.lie_numerics import as_matrix, commutator, frozen_matrix, random_element
from meromorphic_envelopes.sphere_geometry import (
    DEFAULT_EXCLUSION_RADIUS,
    JOIN_TOLERANCE,
    ComplexPath,
    Polyline,
    polyline,
    crossed_puncture,
    loop_around,
)
from meromorphic_envelopes.transport import (
    DEFAULT_TOLERANCE,
    FlatSectionGerm,
    growth_fit,
    monodromy,
    transport_adjoint,
)

logger = logging.getLogger(__name__)

MERGE_RADIUS = 1e-10

CYCLE_TOLERANCE = 1e-6


def _merge_terms(terms):
    merged = []
    for point, coefficient in terms:
        point, coefficient = complex(point), as_matrix(coefficient)
        for index, (other, total) in enumerate(merged):
            if abs(point - other) <= MERGE_RADIUS:
                merged[index] = (other, total + coefficient)
                break
        else:
            merged.append((point, coefficient))

    return tuple((point, frozen_matrix(coefficient)) for point, coefficient in merged if np.any(coefficient))


@define(frozen=True, eq=False)
class QuantumDivisor:
    """Formal sum of points with adjoint coefficients."""

    terms = field(converter=_merge_terms, factory=tuple)

    def __add__(self, other):
        return QuantumDivisor(self.terms + other.terms)

    def scaled(self, weight):
        return QuantumDivisor([(point, weight * coefficient) for point, coefficient in self.terms])

    @property
    def norm(self):
        """Total Frobenius norm of the coefficients."""
        return float(sum(np.linalg.norm(coefficient) for _, coefficient in self.terms))

    @property
    def support(self):
        return tuple(point for point, _ in self.terms)

    def coefficient_at(self, point):
        for other, coefficient in self.terms:
            if abs(point - other) <= MERGE_RADIUS:
                return np.array(coefficient)

        return None

    def is_localized(self):
        return len(self.terms) <= 1


def _at(a, b):
    return abs(a - b) <= JOIN_TOLERANCE * max(1.0, abs(a))


@define(frozen=True, eq=False)
class Cell:
    """Weighted path with the germ of its flat section at one endpoint."""

    weight = field(converter=complex)
    path = field()
    germ = field()

    def __attrs_post_init__(self):
        if self.germ.kind != "adjoint":
            raise ValueError("Cell coefficients must be adjoint sections")
        if not (_at(self.germ.anchor, self.path.start) or _at(self.germ.anchor, self.path.end)):
            raise GeometryError(f"Germ anchored at {self.germ.anchor} is not an endpoint of its path")

    @property
    def anchored_at_start(self):
        return _at(self.germ.anchor, self.path.start)

    @property
    def path_from_anchor(self):
        """The path oriented to start at the germ anchor."""
        return self.path if self.anchored_at_start else self.path.reversed()

    def reversed(self):
        return Cell(self.weight, self.path.reversed(), self.germ)

    def scaled(self, weight):
        return Cell(weight * self.weight, self.path, self.germ)

    def value_at_other_end(self, phi, tol=DEFAULT_TOLERANCE, **kwargs):
        """Return the section transported from the anchor to the other endpoint."""
        return transport_adjoint(phi, self.path_from_anchor, self.germ, tol, **kwargs).end_value


def _cell_tuple(cells):
    return tuple(cells)


@define(frozen=True, eq=False)
class QuantumTrajectory:
    """Formal sum of cells over a gauge potential.

    A path may end inside an exclusion disk but not cross one. A cell
    running between two poles has no end to carry its germ and is refused.
    """

    cells = field(converter=_cell_tuple)
    phi = field()
    exclusion_radius = field(default=DEFAULT_EXCLUSION_RADIUS, converter=float)
    gate = field(default=None, repr=False)

    def __attrs_post_init__(self):
        punctures = self.punctures
        for index, cell in enumerate(self.cells):
            start, end = punctures.excluding(cell.path.start), punctures.excluding(cell.path.end)
            if start is not None and end is not None:
                raise GeometryError(f"cells[{index}] runs between the poles {start} and {end}")

            pole = punctures.excluding(cell.germ.anchor)
            if pole is not None:
                raise GeometryError(f"cells[{index}] germ is anchored inside the exclusion disk of {pole}")

            pole = crossed_puncture(cell.path, punctures)
            if pole is not None:
                raise GeometryError(f"cells[{index}] path crosses the exclusion disk of {pole}")

    @property
    def punctures(self):
        return self.phi.punctures(self.exclusion_radius)

    def __add__(self, other):
        return QuantumTrajectory(self.cells + other.cells, self.phi, self.exclusion_radius)

    def scaled(self, weight):
        return QuantumTrajectory([cell.scaled(weight) for cell in self.cells], self.phi, self.exclusion_radius)

    def reversed(self):
        return QuantumTrajectory([cell.reversed() for cell in self.cells], self.phi, self.exclusion_radius)


@define(frozen=True, eq=False)
class BoundaryReport:
    """Boundary divisor with the endpoints dropped by the exclusion rule."""

    divisor = field()
    dropped_endpoints = field(converter=tuple, factory=tuple)


def boundary_1(gamma, tol=DEFAULT_TOLERANCE):
    """Return the boundary: +weight at each path end, -weight at each start.

    Endpoints within the exclusion radius of a pole are dropped and
    reported.

    :raises TransportError: If a section cannot be transported.
    """
    punctures = gamma.punctures
    terms = []
    dropped = []
    for cell in gamma.cells:
        for point, sign, is_anchor in (
            (cell.path.end, 1, not cell.anchored_at_start),
            (cell.path.start, -1, cell.anchored_at_start),
        ):
            pole = punctures.excluding(point)
            if pole is not None:
                reason = f"within {abs(point - pole):.3g} of the pole {pole}"
                logger.debug("Dropped endpoint %(point)s: %(reason)s", {"point": point, "reason": reason})
                dropped.append((point, reason))
                continue

            if is_anchor:
                value = np.asarray(cell.germ.value)
            else:
                value = cell.value_at_other_end(gamma.phi, tol, exclusion_radius=gamma.exclusion_radius)
            terms.append((point, sign * cell.weight * value))

    return BoundaryReport(QuantumDivisor(terms), dropped)


def is_cycle(gamma, tol=CYCLE_TOLERANCE, transport_tol=DEFAULT_TOLERANCE):
    """Return whether the boundary vanishes at the tolerance, with its norm."""
    residual = boundary_1(gamma, transport_tol).divisor.norm
    return residual <= tol, residual


def trivial_cycle_around(phi, p, radius, e, tol=DEFAULT_TOLERANCE, exclusion_radius=DEFAULT_EXCLUSION_RADIUS):
    """Return the circle around p carrying e, and the norm of [monodromy, e].

    The chain is a cycle exactly when e commutes with the monodromy.

    :raises GeometryError: If the circle meets another pole.
    """
    loop = loop_around(p, radius, 0.0, phi.punctures(exclusion_radius))
    e = as_matrix(e)
    gamma = QuantumTrajectory([Cell(1, loop, FlatSectionGerm(loop.start, e))], phi, exclusion_radius)
    residual = float(np.linalg.norm(commutator(monodromy(phi, loop, tol).entries, e)))
    return gamma, residual


def split_cell(phi, cell, t, tol=DEFAULT_TOLERANCE):
    """Return two cells covering the path before and after t, sharing the section."""
    head, tail = cell.path.split(t)
    if cell.anchored_at_start:
        middle = transport_adjoint(phi, head, cell.germ, tol).end_value
        return Cell(cell.weight, head, cell.germ), Cell(cell.weight, tail, FlatSectionGerm(tail.start, middle))

    middle = transport_adjoint(phi, tail.reversed(), cell.germ, tol).end_value
    return Cell(cell.weight, head, FlatSectionGerm(head.end, middle)), Cell(cell.weight, tail, cell.germ)


@define(frozen=True, eq=False)
class PoleGate:
    """Local geometry of a path leaving a pole and the growth of its section there.

    The section is modelled on the disk of model_radius around the pole;
    regularisation happens inside inner_radius.
    """

    pole = field(converter=complex)
    direction = field(converter=complex)
    inner_radius = field(converter=float)
    model_radius = field(converter=float)
    fit = field()
    model_germ = field()

    @property
    def label_point(self):
        return self.pole + self.inner_radius * self.direction

    @property
    def model_point(self):
        return self.pole + self.model_radius * self.direction

    @property
    def pole_order(self):
        return self.fit.pole_order


def pole_gate(phi, p, path, germ, tol=DEFAULT_TOLERANCE, exclusion_radius=DEFAULT_EXCLUSION_RADIUS):
    """Check that the section carried by a path leaving the pole p has at worst a pole there.

    The path must start at p with a straight leg; the germ is anchored at
    the path end. The local disk has radius min(R/2, L), R the distance
    to the nearest other pole and L the length of the first leg.

    :raises GateError: If the growth is not that of a pole.
    """
    first = path.segments[0]
    if not isinstance(first, Polyline) or not _at(first.start, p):
        raise GeometryError(f"Path must leave the pole {p} along a straight leg")

    leg = first.points[1] - p
    others = [abs(q - p) for q in phi.pole_positions if abs(q - p) > JOIN_TOLERANCE]
    reach = min(others) if others else abs(leg)
    inner = min(reach / 4, abs(leg) / 2)
    direction = leg / abs(leg)
    if not _at(germ.anchor, path.end):
        raise GeometryError("Germ must be anchored at the far end of the path")

    t = 2 * inner / path.length
    if t < 1 - 1e-9:
        model_point = p + 2 * inner * direction
        rest = path.split(t)[1].reversed()
        value = transport_adjoint(phi, rest, germ, tol, exclusion_radius=exclusion_radius).end_value
    else:
        model_point, value = path.end, np.asarray(germ.value)
    model_germ = FlatSectionGerm(model_point, value)
    fit = growth_fit(phi, p, model_germ, 2 * inner / 16, tol)
    logger.debug(
        "Section at %(pole)s has growth exponent %(exponent)s", {"pole": p, "exponent": fit.exponent}
    )
    return PoleGate(p, direction, inner, 2 * inner, fit, model_germ)


def localized_boundary_trajectory(
    phi,
    p,
    z,
    e,
    route=(),
    tol=DEFAULT_TOLERANCE,
    exclusion_radius=DEFAULT_EXCLUSION_RADIUS,
    check_gate=True,
):
    """Return the one-cell trajectory from the pole p to z whose boundary is z times e.

    The path runs straight from p through the route waypoints to z, and
    carries the flat section equal to e at z. Its start lies at the pole,
    so the boundary keeps only the end term.

    Without check_gate the growth of the section at p is not examined and
    no gate is attached.

    :raises PoleError: If p is not a pole.
    :raises GeometryError: If z lies inside an exclusion disk.
    :raises GateError: If the section has an essential singularity at p.
    """
    pole = phi.find_pole(p).position
    z = complex(z)
    if phi.punctures(exclusion_radius).excluding(z) is not None:
        raise GeometryError(f"Target {z} lies inside an exclusion disk")

    path = ComplexPath([Polyline([pole, *route, z])])
    germ = FlatSectionGerm(z, as_matrix(e))
    gate = pole_gate(phi, pole, path, germ, tol, exclusion_radius) if check_gate else None
    return QuantumTrajectory([Cell(1, path, germ)], phi, exclusion_radius, gate=gate)


def distance_to_support(gamma, x):
    """Return the distance from x to the paths of the trajectory."""
    return min((cell.path.distance_to(x) for cell in gamma.cells), default=math.inf)


def random_chain(phi, rng, cells=3, exclusion_radius=DEFAULT_EXCLUSION_RADIUS):
    """Return a trajectory of random polylines below every pole.

    The vertices lie in a half-plane free of poles, so no path crosses an
    exclusion disk. Weights are complex Gaussians and each section starts
    from a random element at the start of its path.
    """
    positions = phi.pole_positions
    spread = 1 + max((abs(p - q) for p in positions for q in positions), default=0.0)
    center = complex(np.mean([p.real for p in positions])) if positions else 0j
    top = min((p.imag for p in positions), default=1.0) - 1

    def vertex():
        u, v = rng.uniform(-1, 1), rng.uniform(0, 1)
        return center + spread * u + 1j * (top - spread * v)

    result = []
    for _ in range(cells):
        path = polyline([vertex() for _ in range(rng.integers(2, 4))])
        weight = complex(*rng.standard_normal(2))
        result.append(Cell(weight, path, FlatSectionGerm(path.start, random_element(phi.algebra, rng))))

    return QuantumTrajectory(result, phi, exclusion_radius)


def linearity_defect(first, second, a, b, tol=DEFAULT_TOLERANCE):
    """Return the relative distance between the boundary of a first + b second and a and b times theirs."""
    combined = boundary_1(first.scaled(a) + second.scaled(b), tol).divisor
    expected = boundary_1(first, tol).divisor.scaled(a) + boundary_1(second, tol).divisor.scaled(b)
    return (combined + expected.scaled(-1)).norm / max(expected.norm, 1.0)


def subdivision_defect(gamma, ts, tol=DEFAULT_TOLERANCE):
    """Return the relative change of the boundary when each cell is split at its own t."""
    whole = boundary_1(gamma, tol).divisor
    cells = [part for cell, t in zip(gamma.cells, ts) for part in split_cell(gamma.phi, cell, t, tol)]
    parts = boundary_1(QuantumTrajectory(cells, gamma.phi, gamma.exclusion_radius), tol).divisor
    return (whole + parts.scaled(-1)).norm / max(whole.norm, 1.0)
