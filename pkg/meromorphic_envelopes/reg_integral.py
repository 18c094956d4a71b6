"""Regularised divergent integrals and their envelope realisation.

The integral of f(z) dz / (z - p)^(d+1) from a pole p to z diverges when
f(p) != 0. Its regularised value subtracts the order d Taylor polynomial
of f at p from the integrand and adds back the integrals of the
subtracted terms, a logarithm included:

    >>> import cmath
    >>> f = AnalyticFunction(lambda z: 1.0, center=0, radius=1)
    >>> spec = RegIntegralSpec(f, p=0, z=0.5, d=0)
    >>> abs(regularized_integral(spec) - cmath.log(0.5)) < 1e-12
    True

The same value is the limit, as the label q tends to p, of a family of
counter-termed primitives:

    >>> abs(envelope_family(spec, 1e-3) - cmath.log(0.5)) < 1e-12
    True
"""

import logging

import numpy as np
from attrs import define, field

from meromorphic_envelopes.errors import GeometryError, NumericalError, PoleError, QuadratureError
from meromorphic_envelopes.sphere_geometry import JOIN_TOLERANCE, log_along, quad_complex, segment

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-12

EXTRA_TERMS = 30
"""Taylor terms kept beyond order d + 1 for the series of the subtracted integrand."""

MAX_NODES = 1 << 14

STABILITY = 1e-12

CONSISTENCY = 1e-9

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _value(value):
    value = np.asarray(value, dtype=complex)
    return complex(value) if value.ndim == 0 else value


def _horner(coefficients, w):
    result = np.zeros_like(coefficients[0])
    for coefficient in coefficients[::-1]:
        result = result * w + coefficient

    return _value(result)


def _norm(value):
    return float(np.max(np.abs(value), initial=0.0))


@define(frozen=True, eq=False)
class AnalyticFunction:
    """Scalar or matrix valued function analytic on a disk."""

    evaluator = field(repr=False)
    center = field(converter=complex)
    radius = field(converter=float)

    @radius.validator
    def _check_radius(self, attribute, value):
        if value <= 0:
            raise ValueError(f"Radius of analyticity must be positive, got {value}")

    def __call__(self, z):
        return _value(self.evaluator(z))

    def is_consistent(self, up_to=8):
        """Whether Taylor coefficients on radii R/2 and R/4 agree."""
        try:
            taylor_coefficients(self, self.center, up_to, self.radius / 2)
        except QuadratureError:
            return False

        return True


@define(frozen=True, eq=False)
class RegIntegralSpec:
    """Divergent integral of f(z) dz / (z - p)^(d+1) along a path from p to z."""

    f = field()
    p = field(converter=complex)
    z = field(converter=complex)
    d = field(converter=int)
    path = field()

    @path.default
    def _default_path(self):
        return segment(self.p, self.z)

    def __attrs_post_init__(self):
        if self.d < 0:
            raise ValueError(f"Order d must be nonnegative, got {self.d}")
        if self.z == self.p:
            raise ValueError("Regular endpoint z must differ from the pole p")
        scale = max(1.0, abs(self.p), abs(self.z))
        gaps = abs(self.path.start - self.p), abs(self.path.end - self.z)
        if max(gaps) > JOIN_TOLERANCE * scale:
            raise GeometryError(f"Path must run from {self.p} to {self.z}")


def _cauchy_scaled(f, p, up_to, radius):
    """Return c_k r^k for k <= up_to, doubling nodes until they are stable."""
    nodes = max(16, 8 * (up_to + 1))
    previous = None
    while nodes <= MAX_NODES:
        circle = p + radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
        samples = np.array([np.asarray(f(y), dtype=complex) for y in circle])
        scaled = np.fft.fft(samples, axis=0)[: up_to + 1] / nodes
        if previous is not None and _norm(scaled - previous) <= STABILITY * _norm(scaled):
            logger.debug("Taylor coefficients stable with %(nodes)s nodes", {"nodes": nodes})
            return scaled

        previous = scaled
        nodes *= 2

    raise QuadratureError(f"Taylor coefficients at {p} did not stabilise with {MAX_NODES} nodes")


def taylor_coefficients(f, p, up_to, radius):
    """Return f^(k)(p)/k! for k = 0..up_to from Cauchy integrals on a circle.

    The coefficients are checked against those on the circle of half the
    radius.

    :raises ValueError: If the circle leaves the disk of analyticity.
    :raises QuadratureError: If the two circles disagree, which means f
        is not analytic there.
    """
    p = complex(p)
    if up_to < 0:
        raise ValueError(f"Number of Taylor terms must be nonnegative, got {up_to}")
    if not 0 < radius < f.radius - abs(p - f.center):
        raise ValueError(f"Circle of radius {radius} around {p} leaves the disk of analyticity")

    outer = _cauchy_scaled(f, p, up_to, radius)
    inner = _cauchy_scaled(f, p, up_to, radius / 2)
    scale = _norm(outer)
    for k in range(up_to + 1):
        # inner[k] carries roundoff amplified by 2^k once rescaled to the outer radius
        allowance = (CONSISTENCY + 1e-14 * 2.0**k) * scale
        if _norm(outer[k] - inner[k] * 2.0**k) > allowance:
            raise QuadratureError(f"Taylor coefficient {k} at {p} depends on the radius: f is not analytic there")

    shape = (-1,) + (1,) * (outer.ndim - 1)
    return outer / (radius ** np.arange(up_to + 1, dtype=float)).reshape(shape)


@define(frozen=True, eq=False)
class SubtractedIntegrand:
    """Regular part (f - Taylor_d f) / (z - p)^(d+1) of a divergent integrand.

    It is summed from the Taylor series close to p and evaluated directly
    further out.
    """

    spec = field()
    coefficients = field(repr=False)
    series_radius = field(converter=float)

    @classmethod
    def of(cls, spec, extra_terms=EXTRA_TERMS):
        radius = spec.f.radius - abs(spec.p - spec.f.center)
        coefficients = taylor_coefficients(spec.f, spec.p, spec.d + 1 + extra_terms, radius / 2)
        return cls(spec, coefficients, radius / 4)

    def coefficient(self, k):
        return _value(self.coefficients[k])

    def __call__(self, zeta):
        d = self.spec.d
        w = complex(zeta) - self.spec.p
        if abs(w) < self.series_radius:
            return _horner(self.coefficients[d + 1 :], w)

        return (self.spec.f(zeta) - _horner(self.coefficients[: d + 1], w)) / w ** (d + 1)

    def counterterms(self, logarithm):
        """Return the integrated Taylor terms at z, with the given log(z - p)."""
        d = self.spec.d
        w = self.spec.z - self.spec.p
        total = self.coefficient(d) * logarithm
        for k in range(d):
            total = total - self.coefficient(k) / ((d - k) * w ** (d - k))

        return total

    def integrate(self, path, tol=DEFAULT_TOLERANCE):
        """Return the integral along the path, refined geometrically toward p."""
        breakpoints = path.breakpoints
        total = 0
        for piece, (t0, t1) in enumerate(zip(breakpoints, breakpoints[1:])):
            points = None
            if piece == 0 and abs(path.start - self.spec.p) <= JOIN_TOLERANCE * max(1.0, abs(self.spec.p)):
                points = t0 + (t1 - t0) * 2.0 ** -np.arange(1, 12)

            total = total + quad_complex(
                lambda t, piece=piece: np.asarray(self(path.point(t, piece))) * path.velocity(t, piece),
                t0,
                t1,
                epsabs=1e-2 * tol,
                epsrel=tol,
                points=points,
            )

        return total

    def segment_integral(self, a, b):
        """Return the integral over the straight segment a to b by 16 point Gauss-Legendre."""
        half = 0.5 * (b - a)
        middle = 0.5 * (a + b)
        values = (weight * np.asarray(self(middle + half * x)) for weight, x in zip(_GAUSS_WEIGHTS, _GAUSS_NODES))
        return half * sum(values)


def regularized_integral(spec, tol=DEFAULT_TOLERANCE):
    """Return the regularised integral of f(z) dz / (z - p)^(d+1) along the path.

    The logarithm is ln|z - p| + i theta with theta the argument of
    path(t) - p tracked continuously from the initial tangent at p.

    :raises QuadratureError: If quadrature or the Taylor expansion fails.
    """
    integrand = SubtractedIntegrand.of(spec)
    integral = integrand.integrate(spec.path, tol)
    return _value(integral + integrand.counterterms(log_along(spec.path, spec.p)))


def _label_path(spec, q):
    """Return the paths from q to z: a connector onto the path, then its rest."""
    t = spec.path.nearest_parameter(q)
    paths = []
    foot = spec.path.point(t)
    if abs(foot - q) > JOIN_TOLERANCE * max(1.0, abs(q)):
        paths.append(segment(q, foot))
    if t <= 0.0:
        paths.append(spec.path)
    elif t < 1.0:
        paths.append(spec.path.split(t)[1])

    return paths


def envelope_family(spec, q, tol=DEFAULT_TOLERANCE):
    """Return the counter-termed primitive with label q.

    The member is the ordinary integral from q to z, minus the Taylor
    counterterms at q of orders below d, plus the order d logarithm and
    the order d + 1 term at q. The divergent parts cancel in closed form,
    so the value is computed as the integral of the subtracted integrand
    from q to z plus the counterterms at z plus f^(d+1)(p)/(d+1)! (q - p),
    with log(q - p) on the branch continued along the path.

    :raises PoleError: If q is p.
    """
    q = complex(q)
    if q == spec.p:
        raise PoleError("Envelope label must differ from the pole")

    integrand = SubtractedIntegrand.of(spec)
    integral = sum(integrand.integrate(path, tol) for path in _label_path(spec, q))
    counterterms = integrand.counterterms(log_along(spec.path, spec.p))
    return _value(integral + counterterms + integrand.coefficient(spec.d + 1) * (q - spec.p))


def envelope_condition_residual(spec, q, step=1e-3):
    """Return the central difference d/dq of envelope_family at q.

    The difference of two members is the integral of the subtracted
    integrand over the short segment between their labels, which avoids
    differencing two large values. The step is step * |q - p| along the
    direction of q - p.

    :raises PoleError: If q is p.
    :raises QuadratureError: If the step underflows.
    """
    q = complex(q)
    w = q - spec.p
    if w == 0:
        raise PoleError("Envelope label must differ from the pole")

    h = step * w
    a, b = q - h, q + h
    if a == q or b == q:
        raise QuadratureError(f"Differencing step underflows at {q}")

    integrand = SubtractedIntegrand.of(spec)
    difference = -integrand.segment_integral(a, b) + integrand.coefficient(spec.d + 1) * (b - a)
    return _value(difference / (b - a))


def envelope_condition_closed_form(spec, q):
    """Return (-f(q) + sum_{k<=d+1} f^(k)(p)/k! (q - p)^k) / (q - p)^(d+1)."""
    w = complex(q) - spec.p
    integrand = SubtractedIntegrand.of(spec)
    return _value((_horner(integrand.coefficients[: spec.d + 2], w) - spec.f(q)) / w ** (spec.d + 1))


def envelope(family, label_derivative, label, tol=1e-10, max_iterations=50, initial_step=1e-4):
    """Return the label where the label derivative vanishes and the member there.

    Newton iteration on the label, with the derivative of the label
    derivative taken by central differences; matrix valued families are
    solved in the least squares sense.

    :raises NumericalError: If the iteration does not converge.
    """
    tau = complex(label)
    step = initial_step
    for iteration in range(max_iterations):
        residual = np.asarray(label_derivative(tau), dtype=complex)
        if _norm(residual) <= tol:
            logger.debug("Envelope condition met after %(iterations)s iterations", {"iterations": iteration})
            return tau, family(tau)

        h = 1e-3 * max(abs(step), 1e-300)
        slope = (np.asarray(label_derivative(tau + h)) - np.asarray(label_derivative(tau - h))) / (2 * h)
        denominator = np.vdot(slope, slope)
        if denominator == 0:
            raise NumericalError(f"Envelope condition is flat at the label {tau}")

        step = -np.vdot(slope, residual) / denominator
        tau += step

    raise NumericalError(f"Envelope condition not met after {max_iterations} iterations")
