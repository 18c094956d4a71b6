"""Punctured sphere in its affine chart, complex paths and third-kind forms.

Paths are made of polylines and circular arcs and are parameterised by
arclength over [0, 1]:

    >>> path = ComplexPath([Polyline([0, 1])])
    >>> path_eval(path, 0.5) == (0.5, 1)
    True

A small circle around a puncture winds once around it:

    >>> round(winding_number(loop_around(0, 1, 0), 0))
    1
"""

import logging
import math

import numpy as np
from attrs import define, field
from scipy.integrate import quad_vec

from meromorphic_envelopes.errors import GeometryError, PoleError, QuadratureError

logger = logging.getLogger(__name__)

DEFAULT_EXCLUSION_RADIUS = 1e-6

JOIN_TOLERANCE = 1e-12
"""Largest gap between consecutive segments, relative to max(1, |z|)."""


def _complex_tuple(values):
    return tuple(complex(v) for v in values)


def _gap(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


@define(frozen=True)
class PunctureSet:
    """Finite set of punctures with their exclusion disks."""

    points = field(converter=_complex_tuple, factory=tuple)
    exclusion_radius = field(default=DEFAULT_EXCLUSION_RADIUS, converter=float)

    @exclusion_radius.validator
    def _check_radius(self, attribute, value):
        if value <= 0:
            raise GeometryError(f"Exclusion radius must be positive, got {value}")

    def __attrs_post_init__(self):
        for i, p in enumerate(self.points):
            for q in self.points[i + 1 :]:
                if abs(p - q) <= 2 * self.exclusion_radius:
                    raise GeometryError(f"Punctures {p} and {q} are closer than twice the exclusion radius")

    def nearest(self, z):
        """Return the nearest puncture and its distance, or (None, inf)."""
        if not self.points:
            return None, math.inf

        distances = [abs(z - p) for p in self.points]
        index = int(np.argmin(distances))
        return self.points[index], distances[index]

    def excluding(self, z):
        """Return the puncture whose exclusion disk contains z, if any."""
        point, distance = self.nearest(z)
        return point if distance <= self.exclusion_radius else None


@define(frozen=True)
class _Line:
    a = field()
    b = field()

    @property
    def length(self):
        return abs(self.b - self.a)

    def point(self, u):
        return self.a + (self.b - self.a) * u

    def derivative(self, u):
        return self.b - self.a

    def split(self, u):
        m = self.point(u)
        return _Line(self.a, m), _Line(m, self.b)

    def reversed(self):
        return _Line(self.b, self.a)

    def nearest(self, q):
        d = self.b - self.a
        u = ((q - self.a) * d.conjugate()).real / abs(d) ** 2
        return min(1.0, max(0.0, u))

    def distance_to(self, q):
        return abs(q - self.point(self.nearest(q)))

    def as_segment(self):
        return Polyline([self.a, self.b])


@define(frozen=True)
class Polyline:
    """Sequence of straight pieces through the given points."""

    points = field(converter=_complex_tuple)

    @points.validator
    def _check_points(self, attribute, value):
        if len(value) < 2:
            raise GeometryError("A polyline needs at least two points")

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]

    def pieces(self):
        return [_Line(a, b) for a, b in zip(self.points, self.points[1:]) if a != b]

    def reversed(self):
        return Polyline(self.points[::-1])


@define(frozen=True)
class Arc:
    """Circular arc from angle_from to angle_to, in radians."""

    center = field(converter=complex)
    radius = field(converter=float)
    angle_from = field(converter=float)
    angle_to = field(converter=float)

    @radius.validator
    def _check_radius(self, attribute, value):
        if value <= 0:
            raise GeometryError(f"Arc radius must be positive, got {value}")

    @property
    def start(self):
        return self.point(0.0)

    @property
    def end(self):
        return self.point(1.0)

    @property
    def sweep(self):
        return self.angle_to - self.angle_from

    @property
    def length(self):
        return self.radius * abs(self.sweep)

    def point(self, u):
        return self.center + self.radius * np.exp(1j * (self.angle_from + self.sweep * u))

    def derivative(self, u):
        return 1j * self.sweep * self.radius * np.exp(1j * (self.angle_from + self.sweep * u))

    def split(self, u):
        middle = self.angle_from + self.sweep * u
        return (
            Arc(self.center, self.radius, self.angle_from, middle),
            Arc(self.center, self.radius, middle, self.angle_to),
        )

    def pieces(self):
        return [self] if self.sweep else []

    def reversed(self):
        return Arc(self.center, self.radius, self.angle_to, self.angle_from)

    def nearest(self, q):
        offset = q - self.center
        if offset == 0:
            return 0.0

        turn = (np.sign(self.sweep) * (np.angle(offset) - self.angle_from)) % (2 * math.pi)
        if abs(self.sweep) >= 2 * math.pi or turn <= abs(self.sweep):
            return float(turn / abs(self.sweep))

        return 0.0 if abs(q - self.start) <= abs(q - self.end) else 1.0

    def distance_to(self, q):
        return abs(q - self.point(self.nearest(q)))

    def as_segment(self):
        return self


@define(frozen=True)
class ComplexPath:
    """Continuous piecewise smooth path, parameterised by arclength on [0, 1]."""

    segments = field(converter=tuple)
    _pieces = field(init=False, repr=False, eq=False)
    _cumulative = field(init=False, repr=False, eq=False)

    @_pieces.default
    def _make_pieces(self):
        return tuple(piece for segment in self.segments for piece in segment.pieces())

    @_cumulative.default
    def _make_cumulative(self):
        return np.concatenate([[0.0], np.cumsum([piece.length for piece in self._pieces])])

    def __attrs_post_init__(self):
        if not self.segments:
            raise GeometryError("A path needs at least one segment")

        for left, right in zip(self.segments, self.segments[1:]):
            if _gap(left.end, right.start) > JOIN_TOLERANCE:
                raise GeometryError(f"Segments do not join: {left.end} and {right.start}")

        if self.length <= 0:
            raise GeometryError("A path must have positive length")

    def __add__(self, other):
        return ComplexPath(self.segments + other.segments)

    @property
    def start(self):
        return self.segments[0].start

    @property
    def end(self):
        return self.segments[-1].end

    @property
    def length(self):
        return float(self._cumulative[-1])

    @property
    def is_closed(self):
        return _gap(self.start, self.end) <= JOIN_TOLERANCE

    @property
    def breakpoints(self):
        """Parameters bounding the smooth pieces, from 0 to 1."""
        return self._cumulative / self.length

    def _locate(self, t, piece=None):
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"Path parameter must lie in [0, 1], got {t}")

        s = t * self.length
        if piece is None:
            index = int(np.searchsorted(self._cumulative, s, side="right")) - 1
            index = min(max(index, 0), len(self._pieces) - 1)
        else:
            index = piece
        u = (s - self._cumulative[index]) / self._pieces[index].length
        return index, min(max(u, 0.0), 1.0)

    def point(self, t, piece=None):
        """Return the point at t, on the given smooth piece if any."""
        index, u = self._locate(t, piece)
        return complex(self._pieces[index].point(u))

    def velocity(self, t, piece=None):
        """Return d(point)/dt at t, one-sided on the given smooth piece if any."""
        index, u = self._locate(t, piece)
        piece = self._pieces[index]
        return complex(piece.derivative(u)) * self.length / piece.length

    def reversed(self):
        return ComplexPath([segment.reversed() for segment in reversed(self.segments)])

    def split(self, t):
        """Return the paths before and after parameter t, 0 < t < 1."""
        if not 0.0 < t < 1.0:
            raise ValueError(f"Split parameter must lie in (0, 1), got {t}")

        index, u = self._locate(t)
        piece = self._pieces[index]
        before, after = list(self._pieces[:index]), list(self._pieces[index + 1 :])
        if u > 0:
            head, tail = piece.split(u)
            before.append(head)
            after.insert(0, tail)
        else:
            after.insert(0, piece)

        return (
            ComplexPath([p.as_segment() for p in before]),
            ComplexPath([p.as_segment() for p in after]),
        )

    def distance_to(self, q):
        return min(piece.distance_to(q) for piece in self._pieces)

    def nearest_parameter(self, q):
        """Return the parameter of the point of the path nearest to q."""
        distances = [piece.distance_to(q) for piece in self._pieces]
        index = int(np.argmin(distances))
        s = self._cumulative[index] + self._pieces[index].nearest(q) * self._pieces[index].length
        return float(s / self.length)


def segment(a, b):
    """Return the straight path from a to b."""
    return ComplexPath([Polyline([a, b])])


def polyline(points):
    """Return the path through the given points."""
    return ComplexPath([Polyline(points)])


def path_eval(path, t):
    """Return the point and velocity d(point)/dt of the path at t."""
    return path.point(t), path.velocity(t)


def loop_around(p, radius, basepoint_angle=0.0, punctures=None):
    """Return the counterclockwise circle of the radius around p.

    The loop starts and ends at p + radius * exp(i * basepoint_angle).

    :raises GeometryError: If the closed disk meets another puncture's
        exclusion disk.
    """
    if radius <= 0:
        raise GeometryError(f"Loop radius must be positive, got {radius}")

    if punctures is not None:
        eps = punctures.exclusion_radius
        if radius <= eps:
            raise GeometryError(f"Loop radius {radius} lies inside the exclusion disk of {p}")
        for q in punctures.points:
            if abs(q - p) > eps and abs(q - p) <= radius + eps:
                raise GeometryError(f"Loop of radius {radius} around {p} meets the puncture {q}")

    return ComplexPath([Arc(p, radius, basepoint_angle, basepoint_angle + 2 * math.pi)])


def min_distance_to_punctures(path, punctures):
    """Return the exact distance between the path and the puncture points."""
    if not punctures.points:
        return math.inf

    return min(path.distance_to(q) for q in punctures.points)


def crossed_puncture(path, punctures):
    """Return a puncture whose exclusion disk the path enters away from its endpoints, or None.

    An endpoint inside a disk is allowed; the path is then only checked
    from three exclusion radii on from that endpoint.
    """
    eps = punctures.exclusion_radius
    margin = 3 * eps / path.length
    for q in punctures.points:
        lo = margin if abs(path.start - q) <= eps else 0.0
        hi = 1.0 - margin if abs(path.end - q) <= eps else 1.0
        if lo >= hi:
            continue

        inner = path.split(hi)[0] if hi < 1.0 else path
        inner = inner.split(lo / hi)[1] if lo > 0.0 else inner
        if min_distance_to_punctures(inner, PunctureSet([q], eps)) <= eps:
            return q

    return None


@define(frozen=True)
class ThirdKindForm:
    """Rational form (1/(y - x) - 1/(y - o)) dy with residues +1 at x, -1 at o."""

    x = field(converter=complex)
    o = field(converter=complex)

    def __attrs_post_init__(self):
        if self.x == self.o:
            raise GeometryError("A third-kind form needs distinct poles")


def third_kind_eval(form, y):
    """Return the coefficient of dy of the form at y, scalar or array.

    :raises PoleError: At x or o.
    """
    y = np.asarray(y, dtype=complex)
    if np.any(y == form.x) or np.any(y == form.o):
        raise PoleError("Third-kind form evaluated at one of its poles")

    value = 1 / (y - form.x) - 1 / (y - form.o)
    return complex(value) if value.ndim == 0 else value


def quad_complex(integrand, a, b, epsabs=1e-13, epsrel=1e-11, points=None, limit=2000):
    """Integrate a complex scalar or array valued function over [a, b].

    Adaptive Gauss-Kronrod (21 points) on real and imaginary parts at once.

    :raises QuadratureError: If the subinterval limit is exhausted.
    """
    probe = np.asarray(integrand(0.5 * (a + b)), dtype=complex)

    def real_integrand(t):
        value = np.asarray(integrand(t), dtype=complex)
        return np.concatenate([value.real.ravel(), value.imag.ravel()])

    inner = None
    if points is not None:
        inner = [t for t in points if a < t < b] or None

    result, error, info = quad_vec(
        real_integrand, a, b, epsabs=epsabs, epsrel=epsrel, points=inner, limit=limit, full_output=True
    )
    if info.status == 1:
        raise QuadratureError(f"Quadrature did not converge on [{a}, {b}], error estimate {error}")
    if info.status == 2:
        logger.warning("Quadrature hit roundoff with error estimate %(error)s", {"error": error})

    half = result.size // 2
    value = (result[:half] + 1j * result[half:]).reshape(probe.shape)
    return complex(value) if probe.ndim == 0 else value


def contour_integral(path, func, epsabs=1e-13, epsrel=1e-11):
    """Return the integral of func(z) dz along the path, piece by piece."""
    breakpoints = path.breakpoints
    total = 0
    for piece, (t0, t1) in enumerate(zip(breakpoints, breakpoints[1:])):
        total = total + quad_complex(
            lambda t, piece=piece: np.asarray(func(path.point(t, piece))) * path.velocity(t, piece),
            t0,
            t1,
            epsabs=epsabs,
            epsrel=epsrel,
        )

    return total


def _sample_parameters(path, t_end, count):
    breakpoints = [t for t in path.breakpoints if t < t_end] + [t_end]
    return np.unique(np.concatenate([np.linspace(t0, t1, count) for t0, t1 in zip(breakpoints, breakpoints[1:])]))


def tracked_argument(path, center, t_end=1.0, max_step=math.pi / 8):
    """Return the argument of path(t_end) - center tracked continuously from t = 0.

    The initial value is the principal argument of path(0) - center, or
    of the initial velocity when the path starts at the center.
    """
    count = 16
    while True:
        ts = _sample_parameters(path, t_end, count)
        offsets = np.array([path.point(t) - center for t in ts])
        if offsets[0] == 0 or abs(offsets[0]) <= 1e-14 * max(1.0, abs(center)):
            offsets[0] = path.velocity(0.0)
        if np.any(offsets[1:] == 0):
            raise GeometryError(f"Path passes through {center}, its argument is undefined")

        steps = np.angle(offsets[1:] / offsets[:-1])
        if np.max(np.abs(steps), initial=0.0) <= max_step or count > 1 << 16:
            return float(np.angle(offsets[0]) + np.sum(steps))

        count *= 2


def log_along(path, center, t_end=1.0):
    """Return the logarithm of path(t_end) - center on the tracked branch."""
    return math.log(abs(path.point(t_end) - center)) + 1j * tracked_argument(path, center, t_end)


def winding_number(path, point):
    """Return the (real) number of turns of a closed path around the point."""
    return (tracked_argument(path, point) - np.angle(path.start - point)) / (2 * math.pi)
