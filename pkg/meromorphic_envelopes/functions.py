"""Functions of w = z - p known by their Taylor coefficients.

The command line regularises integrals of these functions by name; their
series also give the regularised integral term by term:

    >>> exp = get_function("exp")
    >>> abs(exp.series_integral(0, 1, 0) - 1.3179021514544) < 1e-12
    True

Entire functions are used as they are. The ``section`` entry is bound to
a connection and a germ first, and becomes the adjoint flat section of
the germ expanded around p.
"""

import cmath
import math

import numpy as np
from attrs import define, field

from meromorphic_envelopes.errors import GeometryError
from meromorphic_envelopes.lie_numerics import commutator
from meromorphic_envelopes.reg_integral import AnalyticFunction, taylor_coefficients
from meromorphic_envelopes.registry import FUNCTIONS_GROUP, Registry
from meromorphic_envelopes.sphere_geometry import JOIN_TOLERANCE, segment
from meromorphic_envelopes.transport import DEFAULT_TOLERANCE, FlatSectionGerm, transport_germ

SERIES_TERMS = 80


@define(frozen=True)
class SeriesFunction:
    """Function of w = z - p with its Taylor coefficients at w = 0.

    Without a radius the function is entire.
    """

    name = field()
    of_offset = field(repr=False)
    coefficient = field(repr=False)
    degree = field(default=None)
    radius = field(default=None)

    def bind(self, phi, germ, p, z, tol=DEFAULT_TOLERANCE):
        return self

    def analytic(self, p, z):
        """Return the function as an AnalyticFunction around p reaching well beyond z."""
        p = complex(p)
        radius = 4 * max(1.0, abs(complex(z) - p)) if self.radius is None else self.radius
        return AnalyticFunction(lambda y: self.of_offset(y - p), p, radius)

    def converges_at(self, w):
        return self.radius is None or abs(w) < self.radius

    def terms(self):
        return range(SERIES_TERMS if self.degree is None else self.degree + 1)

    def series_integral(self, p, z, d):
        """Return the regularised integral from p to z, on the principal logarithm, by summing the series."""
        w = complex(z) - complex(p)
        total = 0j
        for k in self.terms():
            c = self.coefficient(k)
            if k > d:
                total += c * w ** (k - d) / (k - d)
            elif k < d:
                total -= c / ((d - k) * w ** (d - k))
            else:
                total += c * cmath.log(w)

        return total


def _section_coefficients(phi, value, p, reach):
    """Taylor coefficients at p of the solution of dM = [Phi, M] with M(p) = value."""
    potential = AnalyticFunction(phi.evaluate, p, reach)
    phis = taylor_coefficients(potential, p, SERIES_TERMS, reach / 2)
    coefficients = [np.asarray(value, dtype=complex)]
    for k in range(SERIES_TERMS):
        bracket = sum(commutator(phis[j], coefficients[k - j]) for j in range(k + 1))
        coefficients.append(bracket / (k + 1))

    return np.array(coefficients)


@define(frozen=True)
class TransportedSection:
    """Adjoint flat section of a germ, as a function around a regular point."""

    name = field()

    def bind(self, phi, germ, p, z, tol=DEFAULT_TOLERANCE):
        """Return the section of the germ as a SeriesFunction around p.

        The germ is transported straight to p. The series is used on half
        the distance from p to the nearest pole, and the section is
        transported straight out from p beyond it.

        :raises ValueError: Without a germ, or for a fundamental one.
        :raises GeometryError: If p lies inside an exclusion disk.
        """
        if germ is None:
            raise ValueError(f"The {self.name} function needs --germ")
        if germ.kind != "adjoint":
            raise ValueError(f"The {self.name} function needs an adjoint germ")

        p = complex(p)
        pole = phi.punctures().excluding(p)
        if pole is not None:
            raise GeometryError(f"Expansion point {p} lies inside the exclusion disk of {pole}")

        reach = min((abs(q - p) for q in phi.pole_positions), default=4 * max(1.0, abs(complex(z) - p)))
        if abs(germ.anchor - p) <= JOIN_TOLERANCE * max(1.0, abs(p)):
            value = np.asarray(germ.value)
        else:
            value = transport_germ(phi, segment(germ.anchor, p), germ, tol)
        coefficients = _section_coefficients(phi, value, p, reach)
        start = FlatSectionGerm(p, value)

        def of_offset(w):
            if abs(w) <= reach / 2:
                result = np.zeros_like(coefficients[0])
                for coefficient in coefficients[::-1]:
                    result = result * w + coefficient
                return result

            return transport_germ(phi, segment(p, p + w), start, tol)

        return SeriesFunction(
            self.name,
            of_offset,
            lambda k: coefficients[k],
            degree=SERIES_TERMS,
            radius=reach / 2,
        )


constant = SeriesFunction("constant", lambda w: 1.0, lambda k: 1.0 if k == 0 else 0.0, degree=0)

linear = SeriesFunction("linear", lambda w: w, lambda k: 1.0 if k == 1 else 0.0, degree=1)

quadratic = SeriesFunction("quadratic", lambda w: w * w, lambda k: 1.0 if k == 2 else 0.0, degree=2)

exp = SeriesFunction("exp", cmath.exp, lambda k: 1 / math.factorial(k))

section = TransportedSection("section")

BUILTIN_FUNCTIONS = {
    "constant": constant,
    "exp": exp,
    "linear": linear,
    "quadratic": quadratic,
    "section": section,
}


def function_registry():
    return Registry(defaults={FUNCTIONS_GROUP: BUILTIN_FUNCTIONS})


def get_function(name, registry=None):
    """Return a function by name.

    :raises KeyError: Listing the known names otherwise.
    """
    registry = function_registry() if registry is None else registry
    return registry.get(FUNCTIONS_GROUP, name)
