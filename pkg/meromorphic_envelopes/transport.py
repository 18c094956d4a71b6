"""Parallel transport of flat sections and monodromy.

Along a path z(t), a fundamental solution solves dV/dt = Phi(z) z'(t) V
and an adjoint section solves dW/dt = [Phi(z) z'(t), W]. Both are
integrated with an adaptive embedded Runge-Kutta pair, one smooth piece
of the path at a time:

    >>> import numpy as np
    >>> from meromorphic_envelopes.connection import GaugePotential
    >>> from meromorphic_envelopes.lie_numerics import AlgebraSpec
    >>> from meromorphic_envelopes.sphere_geometry import segment
    >>> b = np.array([[0, 1], [0, 0]])
    >>> phi = GaugePotential(AlgebraSpec("sl", 2), poly_tail=[b])
    >>> result = transport_fundamental(phi, segment(0, 1))
    >>> np.allclose(result.end_value, np.eye(2) + b)
    True
"""

import logging

import numpy as np
from attrs import define, field
from attrs.validators import in_
from scipy.integrate import solve_ivp

from meromorphic_envelopes.errors import DimensionError, GateError, GeometryError, PoleError, TransportError
from meromorphic_envelopes.lie_numerics import GroupElement, as_matrix, check_invertible, frozen_matrix
from meromorphic_envelopes.sphere_geometry import (
    DEFAULT_EXCLUSION_RADIUS,
    JOIN_TOLERANCE,
    loop_around,
    min_distance_to_punctures,
    segment,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10

SAFETY_FACTOR = 100
"""Flatness residuals are expected below the tolerance times this factor."""

DEFAULT_METHOD = "DOP853"

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


@define(frozen=True, eq=False)
class FlatSectionGerm:
    """Value of a flat section at an anchor point."""

    anchor = field(converter=complex)
    value = field(converter=frozen_matrix)
    kind = field(default="adjoint", validator=in_(("adjoint", "fundamental")))


@define(frozen=True, eq=False)
class TransportResult:
    """End value of a transport with its accepted steps."""

    end_value = field()
    flatness_residual = field(converter=float)
    steps = field(converter=int)
    ts = field(repr=False)
    values = field(repr=False)


@define(frozen=True, eq=False)
class GrowthFit:
    """Power law fit of the norm of a section on shrinking circles around a pole."""

    pole = field(converter=complex)
    radii = field()
    norms = field()
    slope = field(converter=float)
    exponent = field(converter=int)
    closure_residual = field(converter=float)

    @property
    def pole_order(self):
        return max(0, -self.exponent)


@define(frozen=True, eq=False)
class LaurentSection:
    """Truncated Laurent series of a single valued section on a punctured disk."""

    pole = field(converter=complex)
    radius = field(converter=float)
    orders = field()
    coefficients = field(repr=False)

    def evaluate(self, y, shift=0):
        """Return (y - p)^shift times the section at y, with |y - p| <= radius.

        :raises ValueError: Outside the disk of validity.
        """
        w = complex(y) - self.pole
        if abs(w) > self.radius * (1 + 1e-9):
            raise ValueError(f"{y} lies outside the Laurent disk of radius {self.radius} around {self.pole}")

        powers = self.orders + shift
        if w == 0:
            if np.any(powers < 0) and np.any(self.coefficients[powers < 0]):
                raise PoleError(f"Section has a pole at {self.pole}")
            return np.array(self.coefficients[powers == 0].sum(axis=0))

        return np.tensordot(w ** powers.astype(float), self.coefficients, axes=1)

    def __call__(self, y):
        return self.evaluate(y)


@define(frozen=True, eq=False)
class _DenseSolution:
    solutions = field()
    n = field()

    def __call__(self, t):
        for solution in self.solutions:
            if t <= solution.t[-1]:
                break

        return solution.sol(t)[: self.n * self.n].reshape(self.n, self.n)


def _velocity_potential(phi, path, t, piece=None):
    return phi.evaluate(path.point(t, piece)) * path.velocity(t, piece)


def _bracket(a, w):
    return a @ w - w @ a


def _product(a, w):
    return a @ w


def _check_path(phi, path, exclusion_radius):
    punctures = phi.punctures(exclusion_radius)
    distance = min_distance_to_punctures(path, punctures)
    if distance <= exclusion_radius:
        raise TransportError(
            f"Path comes within {distance:.3g} of a pole, inside the exclusion radius {exclusion_radius:.3g}"
        )


def _solve(path, fun, y0, tol, method):
    y = np.asarray(y0, dtype=complex)
    atol = 1e-3 * tol * max(1.0, float(np.max(np.abs(y), initial=0.0)))
    solutions = []
    breakpoints = path.breakpoints
    for piece, (t0, t1) in enumerate(zip(breakpoints, breakpoints[1:])):
        solution = solve_ivp(
            fun, (t0, t1), y, method=method, rtol=tol, atol=atol, dense_output=True, args=(piece,)
        )
        if solution.status != 0:
            raise TransportError(f"Integration stopped at t = {solution.t[-1]:.6g}: {solution.message}")

        solutions.append(solution)
        y = solution.y[:, -1]

    return y, solutions


def _flatness_residual(phi, path, solutions, apply, n):
    worst = 0.0
    scale = 0.0
    for piece, solution in enumerate(solutions):
        values = solution.y[: n * n]
        scale = max(scale, float(np.max(np.abs(values))))
        for j, (a, b) in enumerate(zip(solution.t, solution.t[1:])):
            half = 0.5 * (b - a)
            integral = sum(
                weight * apply(_velocity_potential(phi, path, tau, piece), solution.sol(tau)[: n * n].reshape(n, n))
                for weight, tau in zip(_GAUSS_WEIGHTS, a + half * (_GAUSS_NODES + 1))
            )
            defect = (values[:, j + 1] - values[:, j]).reshape(n, n) - half * integral
            worst = max(worst, float(np.linalg.norm(defect)))

    return worst / scale if scale else 0.0


def _transport(phi, path, init, apply, tol, method, exclusion_radius):
    _check_path(phi, path, exclusion_radius)
    n = init.shape[0]

    def fun(t, y, piece):
        return apply(_velocity_potential(phi, path, t, piece), y.reshape(n, n)).ravel()

    end, solutions = _solve(path, fun, init.ravel(), tol, method)
    ts = np.concatenate([solutions[0].t[:1], *(s.t[1:] for s in solutions)])
    values = np.concatenate([solutions[0].y[:, :1], *(s.y[:, 1:] for s in solutions)], axis=1)
    residual = _flatness_residual(phi, path, solutions, apply, n)
    steps = len(ts) - 1
    logger.debug(
        "Transport over %(pieces)s pieces took %(steps)s steps, flatness residual %(residual).3g",
        {"pieces": len(solutions), "steps": steps, "residual": residual},
    )
    if residual > SAFETY_FACTOR * tol:
        logger.warning(
            "Flatness residual %(residual).3g exceeds %(factor)s times the tolerance %(tol).3g",
            {"residual": residual, "factor": SAFETY_FACTOR, "tol": tol},
        )

    return TransportResult(
        end_value=end.reshape(n, n),
        flatness_residual=residual,
        steps=steps,
        ts=ts,
        values=values.T.reshape(-1, n, n),
    )


def _check_shape(phi, matrix, name):
    if matrix.shape != (phi.algebra.n, phi.algebra.n):
        raise DimensionError(f"{name} must be {phi.algebra.n}x{phi.algebra.n}, got {matrix.shape}")


def transport_fundamental(
    phi,
    path,
    init=None,
    tol=DEFAULT_TOLERANCE,
    method=DEFAULT_METHOD,
    exclusion_radius=DEFAULT_EXCLUSION_RADIUS,
):
    """Transport a fundamental solution from the start to the end of the path.

    :param init: Value at the path start, identity by default.
    :raises TransportError: If the path enters an exclusion disk or the
        step size underflows.
    """
    init = np.eye(phi.algebra.n, dtype=complex) if init is None else as_matrix(init)
    _check_shape(phi, init, "Initial value")
    check_invertible(init)
    return _transport(phi, path, init, _product, tol, method, exclusion_radius)


def _check_germ(path, germ, kind):
    if germ.kind != kind:
        raise ValueError(f"Expected a {kind} germ, got a {germ.kind} one")

    if abs(germ.anchor - path.start) > JOIN_TOLERANCE * max(1.0, abs(path.start)):
        raise ValueError(f"Germ anchored at {germ.anchor} but the path starts at {path.start}")


def transport_adjoint(
    phi,
    path,
    germ,
    tol=DEFAULT_TOLERANCE,
    method=DEFAULT_METHOD,
    exclusion_radius=DEFAULT_EXCLUSION_RADIUS,
):
    """Transport an adjoint germ anchored at the path start to its end.

    :raises ValueError: If the germ is not adjoint or not anchored at
        the path start.
    """
    _check_germ(path, germ, "adjoint")
    value = np.asarray(germ.value)
    _check_shape(phi, value, "Germ value")
    return _transport(phi, path, value, _bracket, tol, method, exclusion_radius)


def transport_germ(phi, path, germ, tol=DEFAULT_TOLERANCE, **kwargs):
    """Return the end value of a germ of either kind transported along the path."""
    if germ.kind == "fundamental":
        _check_germ(path, germ, "fundamental")
        return transport_fundamental(phi, path, germ.value, tol, **kwargs).end_value

    return transport_adjoint(phi, path, germ, tol, **kwargs).end_value


def integrate_along(
    phi,
    path,
    germ,
    density,
    tol=DEFAULT_TOLERANCE,
    method=DEFAULT_METHOD,
    exclusion_radius=DEFAULT_EXCLUSION_RADIUS,
):
    """Transport a germ and integrate density(y, W(y)) dy along the path at once.

    :param density: Function of the point and the section value there.
    :return: The transported end value and the integral.
    """
    _check_germ(path, germ, germ.kind)
    _check_path(phi, path, exclusion_radius)
    apply = _bracket if germ.kind == "adjoint" else _product
    value = np.asarray(germ.value)
    _check_shape(phi, value, "Germ value")
    n = value.shape[0]
    probe = np.asarray(density(path.start, value), dtype=complex)
    size = n * n

    def fun(t, y, piece):
        point, velocity = path.point(t, piece), path.velocity(t, piece)
        w = y[:size].reshape(n, n)
        return np.concatenate([
            apply(phi.evaluate(point) * velocity, w).ravel(),
            np.asarray(density(point, w), dtype=complex).ravel() * velocity,
        ])

    end, _ = _solve(path, fun, np.concatenate([value.ravel(), np.zeros(probe.size, dtype=complex)]), tol, method)
    integral = end[size:].reshape(probe.shape)
    return end[:size].reshape(n, n), complex(integral) if probe.ndim == 0 else integral


def monodromy(phi, loop, tol=DEFAULT_TOLERANCE, **kwargs):
    """Return the transport of the identity around a closed loop.

    :raises GeometryError: If the loop is not closed.
    """
    if not loop.is_closed:
        raise GeometryError(f"Loop is not closed: starts at {loop.start}, ends at {loop.end}")

    return GroupElement(transport_fundamental(phi, loop, None, tol, **kwargs).end_value)


def adjoint_monodromy_check(phi, loop, e, tol=DEFAULT_TOLERANCE, **kwargs):
    """Return how far an adjoint value fails to come back after one turn of the loop."""
    if not loop.is_closed:
        raise GeometryError(f"Loop is not closed: starts at {loop.start}, ends at {loop.end}")

    e = as_matrix(e)
    end = transport_adjoint(phi, loop, FlatSectionGerm(loop.start, e), tol, **kwargs).end_value
    return float(np.linalg.norm(end - e))


def based_loops(phi, radius_fraction=0.25):
    """Return a common basepoint and loops around every pole from it.

    The basepoint lies below all poles. Each loop runs straight up to a
    circle around its pole, turns once counterclockwise and comes back.
    Loops are listed from left to right as seen from the basepoint,
    which is increasing real part (ties: increasing imaginary part), so
    the ordered product of their monodromies is the inverse of the
    monodromy around infinity.

    :raises GeometryError: If a loop tail passes too close to another pole.
    """
    positions = phi.pole_positions
    if not positions:
        raise GeometryError("There is no pole to loop around")

    spread = max((abs(p - q) for p in positions for q in positions), default=0.0)
    separation = min((abs(p - q) for p in positions for q in positions if p != q), default=1.0)
    real = float(np.mean([p.real for p in positions]))
    lowest = min(p.imag for p in positions)
    basepoint = complex(real + 1e-3 * separation, lowest - 2 * (1 + spread))

    radii = {}
    for p in positions:
        others = [abs(p - q) for q in positions if q != p]
        radii[p] = radius_fraction * min(others) if others else radius_fraction

    ordered = sorted(positions, key=lambda p: -np.angle(p - basepoint))
    loops = []
    for p in ordered:
        angle = float(np.angle(basepoint - p))
        tail = segment(basepoint, p + radii[p] * np.exp(1j * angle))
        for q in positions:
            if q != p and tail.distance_to(q) <= radii[q]:
                raise GeometryError(f"Loop tail to {p} passes within {radii[q]:.3g} of the pole {q}")
        loops.append((p, tail + loop_around(p, radii[p], angle) + tail.reversed()))

    return basepoint, loops


def monodromy_product(phi, tol=DEFAULT_TOLERANCE, **kwargs):
    """Return the ordered product M_1 M_2 ... M_k of based monodromies and the factors."""
    _, loops = based_loops(phi)
    factors = [monodromy(phi, loop, tol, **kwargs) for _, loop in loops]
    product = np.eye(phi.algebra.n, dtype=complex)
    for factor in factors:
        product = product @ factor.entries

    return product, factors


def _sample_circle(phi, germ, p, radius, samples, tol, method):
    """Transport a germ radially onto the circle and around it, returning the samples."""
    direction = (germ.anchor - p) / abs(germ.anchor - p)
    start = p + radius * direction
    n = phi.algebra.n
    value = np.asarray(germ.value)
    if abs(start - germ.anchor) > 0:
        value = transport_adjoint(phi, segment(germ.anchor, start), germ, tol, method).end_value

    loop = loop_around(p, radius, float(np.angle(direction)))
    _check_path(phi, loop, DEFAULT_EXCLUSION_RADIUS)

    def fun(t, y, piece):
        return _bracket(_velocity_potential(phi, loop, t, piece), y.reshape(n, n)).ravel()

    end, solutions = _solve(loop, fun, value.ravel(), tol, method)
    dense = _DenseSolution(solutions, n)
    values = np.array([dense(t) for t in np.arange(samples) / samples])
    closure = float(np.linalg.norm(end.reshape(n, n) - value))
    return FlatSectionGerm(start, value), values, closure


def growth_fit(phi, p, germ, radius, tol=DEFAULT_TOLERANCE, samples=32, max_order=None, method=DEFAULT_METHOD):
    """Fit the growth exponent of an adjoint section at a pole.

    The section given by the germ is transported radially onto circles of
    radius r, r/2 and r/4 around p and sampled there. The log of the
    largest norm is fitted against log r; the slope must be within 0.1 of
    an integer k >= -max_order, and the section must come back to itself
    around each circle, for the section to have at worst a pole of
    order -k.

    :raises GateError: If the section is not single valued or its growth
        is not that of a pole.
    """
    max_order = phi.algebra.n if max_order is None else max_order
    radii = radius / np.array([1.0, 2.0, 4.0])
    norms = []
    closure = 0.0
    current = germ
    for r in radii:
        current, values, residual = _sample_circle(phi, current, p, r, samples, tol, method)
        scale = float(np.max(np.linalg.norm(values, axis=(1, 2))))
        norms.append(scale)
        closure = max(closure, residual / scale if scale else 0.0)

    norms = np.array(norms)
    if not np.any(norms):
        return GrowthFit(p, radii, norms, 0.0, 0, 0.0)

    if closure > max(1e-6, 1e3 * tol):
        raise GateError(f"Section is not single valued around {p}: closure residual {closure:.3g}")

    slope = float(np.polyfit(np.log(radii), np.log(norms), 1)[0])
    exponent = round(slope)
    logger.debug("Growth slope at %(pole)s is %(slope).4f", {"pole": p, "slope": slope})
    if abs(slope - exponent) > 0.1 or exponent < -max_order:
        raise GateError(f"Growth slope {slope:.4f} at {p} is not that of a pole of order at most {max_order}")

    return GrowthFit(p, radii, norms, slope, exponent, closure)


def laurent_section(phi, p, germ, radius, pole_order, nodes=128, tol=DEFAULT_TOLERANCE, method=DEFAULT_METHOD):
    """Return the Laurent model of an adjoint section on the disk of the radius around p.

    The section is sampled on the circle and expanded by FFT; orders from
    -pole_order up to nodes/2 - 1 are kept.

    :raises GateError: If the dropped negative orders do not vanish.
    """
    _, values, _ = _sample_circle(phi, germ, p, radius, nodes, tol, method)
    start_angle = float(np.angle(germ.anchor - p))
    spectrum = np.fft.fft(values, axis=0) / nodes
    orders = np.arange(-pole_order, nodes // 2)
    scaled = spectrum[orders % nodes] * np.exp(-1j * orders * start_angle)[:, None, None]
    coefficients = scaled / (radius ** orders.astype(float))[:, None, None]

    dropped = np.arange(nodes // 2, nodes - pole_order)
    leak = float(np.max(np.abs(spectrum[dropped]), initial=0.0))
    size = float(np.max(np.abs(spectrum)))
    if size and leak > 1e-6 * size:
        raise GateError(f"Section at {p} has a pole of order above {pole_order} or is badly resolved ({leak:.3g})")

    return LaurentSection(p, radius, orders, coefficients)
