"""Command line interface.

Every command reads JSON inputs, writes one JSON document (or CSV rows)
to standard output and exits with 0 on success, 2 on invalid input, 3 on
numerical failure and 1 otherwise.
"""

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np
from attrs import define, field
from attrs.converters import optional
from attrs.validators import in_

from meromorphic_envelopes.codec import (
    decode_chain,
    decode_connection,
    decode_germ,
    decode_path,
    dumps,
    load_fixture,
    load_json,
)
from meromorphic_envelopes.connection import GaugePotential, is_fuchsian, sum_of_residues
from meromorphic_envelopes.deformation import DeformationPotentialField
from meromorphic_envelopes.envelope_sections import (
    EnvelopeSectionField,
    EnvelopeSectionSpec,
    boundary_check,
    section_value,
    vanishing_subspace,
)
from meromorphic_envelopes.errors import NumericalError
from meromorphic_envelopes.functions import function_registry
from meromorphic_envelopes.lie_numerics import (
    adjoint_action,
    algebra_basis,
    commutator,
    joint_commutant,
    matrix_exp,
    random_element,
)
from meromorphic_envelopes.quantum_homology import (
    Cell,
    QuantumTrajectory,
    boundary_1,
    is_cycle,
    linearity_defect,
    random_chain,
    subdivision_defect,
    trivial_cycle_around,
)
from meromorphic_envelopes.reg_integral import (
    RegIntegralSpec,
    envelope_condition_closed_form,
    envelope_condition_residual,
    envelope_family,
    regularized_integral,
)
from meromorphic_envelopes.registry import FUNCTIONS_GROUP
from meromorphic_envelopes.sphere_geometry import loop_around, segment
from meromorphic_envelopes.transport import (
    DEFAULT_TOLERANCE,
    FlatSectionGerm,
    based_loops,
    monodromy,
    monodromy_product,
    transport_adjoint,
    transport_fundamental,
)

logger = logging.getLogger(__name__)

COMMANDS = ("transport", "monodromy", "regint", "boundary", "deform", "envelope", "commutant", "verify")

SUITES = ("all", "transport", "monodromy", "regint", "boundary", "deformation", "envelope", "commutant")

EXIT_SUCCESS, EXIT_INTERNAL, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3

NON_COMMUTING = 1e-2

CHAIN_SAMPLES = 5


def parse_complex(text):
    """Parse "re,im" or a single real number.

    >>> parse_complex("1.5,-2")
    (1.5-2j)
    """
    parts = text.split(",")
    try:
        values = [float(part) for part in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected re,im but got {text!r}") from None

    if len(values) == 1:
        return complex(values[0])
    if len(values) == 2:
        return complex(*values)

    raise argparse.ArgumentTypeError(f"expected re,im but got {text!r}")


def _existing_file(instance, attribute, value):
    if value is not None and not os.path.isfile(value):
        raise ValueError(f"--{attribute.name.replace('_', '-')} file {value} does not exist")


def _complex_tuple(values):
    return tuple(complex(value) for value in values or ())


@define(frozen=True)
class RunConfig:
    """Validated options of one command."""

    command = field(validator=in_(COMMANDS))
    connection = field(default=None, validator=_existing_file)
    path = field(default=None, validator=_existing_file)
    chain = field(default=None, validator=_existing_file)
    germ = field(default=None, validator=_existing_file)
    tol = field(default=DEFAULT_TOLERANCE, converter=float)
    out = field(default="json", validator=in_(("json", "csv")))
    csv_file = field(default=None)
    seed = field(default=0, converter=int)
    pole = field(default=None, converter=optional(complex))
    order = field(default=0, converter=int)
    xs = field(factory=tuple, converter=_complex_tuple)
    o = field(default=None, converter=optional(complex))
    zs = field(factory=tuple, converter=_complex_tuple)
    anchor = field(default=None, converter=optional(complex))
    route = field(factory=tuple, converter=_complex_tuple)
    reference = field(default=None, converter=optional(complex))
    function = field(default="exp")
    suite = field(default="all", validator=in_(SUITES))
    verbose = field(default=0, converter=int)

    @tol.validator
    def _check_tol(self, attribute, value):
        if not value > 0 or not math.isfinite(value):
            raise ValueError(f"--tol must be positive, got {value}")

    @order.validator
    def _check_order(self, attribute, value):
        if value < 0:
            raise ValueError(f"--order must be nonnegative, got {value}")

    @classmethod
    def from_args(cls, args):
        return cls(
            command=args.command,
            connection=args.connection,
            path=args.path,
            chain=args.chain,
            germ=args.germ,
            tol=args.tol,
            out=args.out,
            csv_file=args.csv,
            seed=args.seed,
            pole=args.pole,
            order=args.order,
            xs=args.x,
            o=args.o,
            zs=args.z,
            anchor=args.anchor,
            route=args.route,
            reference=args.reference,
            function=args.function,
            suite=args.suite,
            verbose=args.verbose,
        )


def load_connection(config):
    """Return the connection of the config, the shipped two pole one by default."""
    data = load_fixture("two_pole_sl2.json") if config.connection is None else load_json(config.connection)
    return decode_connection(data)


def _require(value, flag):
    if value is None or value == ():
        raise ValueError(f"{flag} is required for this command")

    return value


def _row(z, matrix):
    z = complex(z)
    row = [repr(z.real), repr(z.imag)]
    for entry in np.asarray(matrix).ravel():
        row.extend([repr(float(entry.real)), repr(float(entry.imag))])

    return row


def _header(n):
    header = ["re(z)", "im(z)"]
    for i in range(n):
        for j in range(n):
            header.extend([f"re(m{i}{j})", f"im(m{i}{j})"])

    return header


def run_transport(config, phi):
    path = decode_path(load_json(_require(config.path, "--path")))
    if config.germ is None:
        result = transport_fundamental(phi, path, tol=config.tol)
        document = {"result": result, "det": complex(np.linalg.det(result.end_value))}
    else:
        germ = decode_germ(load_json(config.germ), "germ", phi.algebra.n)
        result = transport_adjoint(phi, path, germ, config.tol)
        document = {"result": result}

    rows = [_row(path.point(t), value) for t, value in zip(result.ts, result.values)]
    return document, rows


def run_monodromy(config, phi):
    if config.path is not None:
        element = monodromy(phi, decode_path(load_json(config.path)), config.tol)
        return {"monodromy": element, "det": element.det}, None

    basepoint, loops = based_loops(phi)
    product, factors = monodromy_product(phi, config.tol)
    identity = np.eye(phi.algebra.n)
    document = {
        "basepoint": basepoint,
        "loops": [
            {"pole": p, "monodromy": factor, "det": factor.det} for (p, _), factor in zip(loops, factors)
        ],
        "product": product,
        "relation_residual": float(np.linalg.norm(product - identity)),
    }
    return document, None


def _series_function(config, phi, p, z):
    """Look the function up and bind it to the connection and the germ, if any."""
    germ = None if config.germ is None else decode_germ(load_json(config.germ), "germ", phi.algebra.n)
    function = function_registry().get(FUNCTIONS_GROUP, config.function)
    return function.bind(phi, germ, p, z, config.tol)


def run_regint(config, phi):
    p = 0j if config.pole is None else config.pole
    z = config.zs[0] if config.zs else p + 1
    function = _series_function(config, phi, p, z)
    path = None if config.path is None else decode_path(load_json(config.path))
    kwargs = {} if path is None else {"path": path}
    spec = RegIntegralSpec(function.analytic(p, z), p, z, config.order, **kwargs)
    document = {"function": function.name, "d": config.order, "value": regularized_integral(spec)}
    if path is None and function.converges_at(z - p):
        document["series"] = function.series_integral(p, z, config.order)

    return document, None


def run_boundary(config, phi):
    gamma = decode_chain(load_json(_require(config.chain, "--chain")), phi)
    report = boundary_1(gamma, config.tol)
    return {"boundary": report, "residual": report.divisor.norm, "is_cycle": is_cycle(gamma, 1e-6, config.tol)[0]}, None


def run_deform(config, phi):
    gamma = decode_chain(load_json(_require(config.chain, "--chain")), phi)
    potential = DeformationPotentialField(gamma, _require(config.o, "--o"), config.tol)
    xs = _require(config.xs, "--x")
    values = potential.evaluate_many(xs)
    samples = [
        {"x": x, "potential": value, "direction": potential.direction(x)} for x, value in zip(xs, values)
    ]
    rows = [_row(x, value) for x, value in zip(xs, values)]
    return {"samples": samples, "boundary_norm": potential.boundary_norm}, rows


def _envelope_spec(config, phi):
    anchor = config.anchor if config.anchor is not None else phi.pole_positions[-1]
    if config.germ is None:
        reference = config.reference
        e = None
    else:
        germ = decode_germ(load_json(config.germ), "germ", phi.algebra.n)
        reference, e = germ.anchor, np.asarray(germ.value)

    kwargs = {} if reference is None else {"reference": reference}
    zs = _require(config.zs, "--z")
    if e is None:
        probe = EnvelopeSectionSpec(phi, algebra_basis(phi.algebra)[0], anchor, config.route, zs, **kwargs)
        subspace = vanishing_subspace(probe, config.tol)
        if not subspace:
            raise NumericalError(f"No section vanishes at the anchor {anchor}; pass --germ")
        e = subspace[0]

    return EnvelopeSectionSpec(phi, e, anchor, config.route, zs, **kwargs)


def run_envelope(config, phi):
    spec = _envelope_spec(config, phi)
    envelope = EnvelopeSectionField(spec, config.tol)
    values = envelope.evaluate_many(spec.z_targets)
    sections = [
        {"z": z, "value": value, "offset": value - section_value(spec, z, config.tol)}
        for z, value in zip(spec.z_targets, values)
    ]
    document = {
        "anchor": spec.anchor_pole,
        "e": spec.e,
        "order": envelope.pole.order,
        "boundary_value": envelope.pole.boundary_value,
        "sections": sections,
    }
    return document, [_row(z, value) for z, value in zip(spec.z_targets, values)]


def run_commutant(config, phi):
    if config.path is not None:
        monodromies = [monodromy(phi, decode_path(load_json(config.path)), config.tol)]
    else:
        monodromies = monodromy_product(phi, config.tol)[1]

    basis = joint_commutant([m.entries for m in monodromies])
    return {"dimension": len(basis), "basis": basis}, None


@define(frozen=True)
class Property:
    """Outcome of one verified property."""

    name = field()
    value = field(converter=float)
    threshold = field(converter=float)
    at_least = field(default=False)
    skipped = field(default=False)
    error = field(default=None)

    @property
    def passed(self):
        if self.skipped:
            return True
        if self.error is not None or math.isnan(self.value):
            return False

        return self.value >= self.threshold if self.at_least else self.value <= self.threshold


def _verify_transport(config, phi):
    _, loops = based_loops(phi)
    factors = [monodromy(phi, loop, config.tol) for _, loop in loops]
    expected = [np.exp(2j * np.pi * np.trace(phi.find_pole(p).laurent[0])) for p, _ in loops]
    yield Property("det_identity", max(abs(m.det - e) for m, e in zip(factors, expected)), 1e-8)

    rng = np.random.default_rng(config.seed)
    loop, m = loops[0][1], factors[0].entries
    worst = 0.0
    for _ in range(20):
        e = random_element(phi.algebra, rng)
        end = transport_adjoint(phi, loop, FlatSectionGerm(loop.start, e), config.tol).end_value
        expected = adjoint_action(m, e)
        worst = max(worst, float(np.linalg.norm(end - expected) / np.linalg.norm(expected)))
    yield Property("ad_compatibility", worst, 1e-8)

    # Constant potentials transport by their exponential.
    a, z = random_element(phi.algebra, rng), 1 + 0.5j
    end = transport_fundamental(GaugePotential(phi.algebra, poly_tail=[a]), segment(0, z), tol=config.tol).end_value
    expected = matrix_exp(a, z)
    yield Property("constant_system", np.linalg.norm(end - expected) / np.linalg.norm(expected), 1e-8)


def _verify_monodromy(config, phi):
    if not is_fuchsian(phi):
        yield Property("monodromy_relation", math.nan, 1e-6, skipped=True)
        return

    # Infinity is regular only when the residues add up to zero.
    yield Property("residue_sum", np.linalg.norm(sum_of_residues(phi)), 1e-8)
    product, _ = monodromy_product(phi, config.tol)
    yield Property("monodromy_relation", np.linalg.norm(product - np.eye(phi.algebra.n)), 1e-6)


def _size(value):
    return float(np.linalg.norm(value))


def _verify_regint(config, phi):
    p = 0j if config.pole is None else config.pole
    z = config.zs[0] if config.zs else p + 1
    function = _series_function(config, phi, p, z)
    if not function.converges_at(z - p):
        z = p + function.radius / 2

    worst = 0.0
    for d in (0, 1, 2):
        spec = RegIntegralSpec(function.analytic(p, z), p, z, d)
        worst = max(worst, _size(regularized_integral(spec) - function.series_integral(p, z, d)))
    yield Property("regint_series", worst, 1e-10)

    spec = RegIntegralSpec(function.analytic(p, z), p, z, 1)
    exact = regularized_integral(spec)
    fractions = np.array([1e-1, 1e-2, 1e-3])
    labels = fractions * abs(z - p)
    errors = np.array([_size(envelope_family(spec, p + t * (z - p)) - exact) for t in fractions])
    slope = np.polyfit(np.log(labels), np.log(errors), 1)[0] if np.all(errors > 0) else math.inf
    yield Property("envelope_slope", slope, 0.9, at_least=True)

    worst = 0.0
    for q in p + labels * np.exp(0.5j):
        closed = envelope_condition_closed_form(spec, q)
        worst = max(worst, _size(envelope_condition_residual(spec, q) - closed) / max(_size(closed), 1e-10))
    yield Property("envelope_condition", worst, 1e-6)

    # The condition vanishes at p with slope -f'''(p)/3!.
    w = 1e-5 * (z - p)
    leading = function.coefficient(spec.d + 2)
    error = _size(envelope_condition_residual(spec, p + w) / w + leading) / max(_size(leading), 1.0)
    yield Property("envelope_leading", error, 1e-4)


def _loop_radius(phi, p):
    others = [abs(p - q) for q in phi.pole_positions if q != p]
    return 0.25 * min(others) if others else 0.25


def _verify_boundary(config, phi):
    worst = 0.0
    for p in phi.pole_positions:
        radius = _loop_radius(phi, p)
        m = monodromy(phi, loop_around(p, radius), config.tol).entries
        e = joint_commutant([m])[0]
        gamma, residual = trivial_cycle_around(phi, p, radius, e, config.tol)
        worst = max(worst, residual, is_cycle(gamma, 1e-6, config.tol)[1])
    yield Property("trivial_cycles", worst, 1e-6)

    # The basis element moved most by the monodromy must not close up.
    smallest, found = math.inf, False
    for p in phi.pole_positions:
        radius = _loop_radius(phi, p)
        m = monodromy(phi, loop_around(p, radius), config.tol).entries
        e = max(algebra_basis(phi.algebra), key=lambda x: np.linalg.norm(commutator(m, x)))
        if np.linalg.norm(commutator(m, e)) < NON_COMMUTING:
            continue

        found = True
        gamma, residual = trivial_cycle_around(phi, p, radius, e, config.tol)
        smallest = min(smallest, residual, is_cycle(gamma, 1e-6, config.tol)[1])
    value = smallest if found else math.nan
    yield Property("non_commuting_germ", value, NON_COMMUTING, at_least=True, skipped=not found)

    rng = np.random.default_rng(config.seed)
    linearity = subdivision = 0.0
    for _ in range(CHAIN_SAMPLES):
        first, second = random_chain(phi, rng), random_chain(phi, rng)
        a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
        linearity = max(linearity, linearity_defect(first, second, a, b, config.tol))
        subdivision = max(subdivision, subdivision_defect(first, rng.uniform(0.1, 0.9, len(first.cells)), config.tol))
    yield Property("chain_linearity", linearity, 1e-8)
    yield Property("chain_subdivision", subdivision, 1e-8)


def _verify_deformation(config, phi):
    p = phi.pole_positions[0]
    radius = _loop_radius(phi, p)
    loop = loop_around(p, radius)
    identity = np.eye(phi.algebra.n, dtype=complex)
    gamma = QuantumTrajectory([Cell(1, loop, FlatSectionGerm(loop.start, identity))], phi)
    x, o = p + 0.5 * radius * np.exp(1j * np.pi / 3), p + 3 * radius
    value = DeformationPotentialField(gamma, o, config.tol)(x)
    yield Property("residue_law", np.linalg.norm(value - 2j * np.pi * identity), 1e-8)


def _verify_envelope(config, phi):
    p = config.anchor if config.anchor is not None else phi.pole_positions[-1]
    reach = 4 * _loop_radius(phi, p)
    route = [p + 0.5j * reach]
    targets = [route[0] + 0.1 * reach * (k - 2 + 1j) for k in range(5)]
    generic = sum(algebra_basis(phi.algebra))
    spec = EnvelopeSectionSpec(phi, generic, p, route, targets)

    values = EnvelopeSectionField(spec, config.tol).evaluate_many(targets)
    offsets = [value - section_value(spec, z, config.tol) for z, value in zip(targets, values)]
    mean = np.mean(offsets, axis=0)
    yield Property("envelope_offset", max(np.linalg.norm(offset - mean) for offset in offsets), 1e-7)
    yield Property("envelope_boundary", boundary_check(spec, targets[0], config.tol), 1e-8)

    subspace = vanishing_subspace(spec, config.tol)
    if not subspace:
        yield Property("envelope_flatness", math.nan, 1e-6, error=f"No section vanishes at {p}")
        return

    flat = EnvelopeSectionField(EnvelopeSectionSpec(phi, subspace[0], p, route, targets), config.tol)
    yield Property("envelope_flatness", max(flat.flatness_residual(z) for z in targets), 1e-6)


def _verify_commutant(config, phi):
    factors = [m.entries for m in monodromy_product(phi, config.tol)[1]]
    basis = joint_commutant(factors)
    worst = max((float(np.linalg.norm(commutator(m, x))) for m in factors for x in basis), default=0.0)
    yield Property("commutant_consistency", worst if basis else math.inf, 1e-8)


VERIFY_SUITES = {
    "transport": _verify_transport,
    "monodromy": _verify_monodromy,
    "regint": _verify_regint,
    "boundary": _verify_boundary,
    "deformation": _verify_deformation,
    "envelope": _verify_envelope,
    "commutant": _verify_commutant,
}


def run_verify(config, phi):
    suites = list(VERIFY_SUITES) if config.suite == "all" else [config.suite]
    properties = []
    for suite in suites:
        try:
            properties.extend(VERIFY_SUITES[suite](config, phi))
        except (NumericalError, ValueError) as e:
            logger.warning("Suite %(suite)s failed: %(error)s", {"suite": suite, "error": e})
            properties.append(Property(suite, math.nan, 0.0, error=str(e)))

    document = {
        "suite": config.suite,
        "seed": config.seed,
        "properties": {
            prop.name: {
                "passed": prop.passed,
                "value": None if math.isnan(prop.value) else prop.value,
                "threshold": prop.threshold,
                **({"skipped": True} if prop.skipped else {}),
                **({"error": prop.error} if prop.error else {}),
            }
            for prop in properties
        },
        "failed": [prop.name for prop in properties if not prop.passed],
    }
    return document, None


RUNNERS = {
    "transport": run_transport,
    "monodromy": run_monodromy,
    "regint": run_regint,
    "boundary": run_boundary,
    "deform": run_deform,
    "envelope": run_envelope,
    "commutant": run_commutant,
    "verify": run_verify,
}


def _write(config, phi, document, rows, stdout):
    if config.out == "csv" and rows is not None:
        if config.csv_file is None:
            writer = csv.writer(stdout, lineterminator="\n")
            writer.writerow(_header(phi.algebra.n))
            writer.writerows(rows)
            return

        with open(config.csv_file, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(_header(phi.algebra.n))
            writer.writerows(rows)

    stdout.write(f"{dumps({'command': config.command, **document})}\n")


def run(config, stdout=None, stderr=None):
    """Run a command and return its exit status."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        phi = load_connection(config)
        document, rows = RUNNERS[config.command](config, phi)
        _write(config, phi, document, rows, stdout)
    except (ValueError, KeyError) as e:
        stderr.write(f"error: {e.args[0] if e.args else e}\n")
        return EXIT_INVALID
    except NumericalError as e:
        stderr.write(f"numerical failure: {e}\n")
        return EXIT_NUMERICAL
    except Exception as e:
        logger.debug("Internal error", exc_info=True)
        stderr.write(f"internal error: {e!r}\n")
        return EXIT_INTERNAL

    logger.info("Command %(command)s completed", {"command": config.command})
    if config.command == "verify" and document["failed"]:
        stderr.write(f"failed properties: {', '.join(document['failed'])}\n")
        return EXIT_NUMERICAL

    return EXIT_SUCCESS


def make_parser():
    parser = argparse.ArgumentParser(
        prog="meromorphic-envelopes",
        description="Flat sections, monodromy, regularised integrals and envelopes of meromorphic connections.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--connection", help="Connection JSON file, the two pole sl2 fixture by default.")
    parser.add_argument("--path", help="Path JSON file.")
    parser.add_argument("--chain", help="Chain JSON file.")
    parser.add_argument("--germ", help="Germ JSON file with an anchor and a value.")
    parser.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE, help="Transport tolerance.")
    parser.add_argument("--out", choices=("json", "csv"), default="json", help="Output format.")
    parser.add_argument("--csv", help="Write CSV rows to this file instead of standard output.")
    parser.add_argument("--seed", type=int, default=0, help="Seed of randomized properties.")
    parser.add_argument("--pole", type=parse_complex, help="Pole of a regularised integral, as re,im.")
    parser.add_argument("--order", type=int, default=0, help="Order d of a regularised integral.")
    parser.add_argument("--x", type=parse_complex, action="append", default=[], help="Evaluation point, repeatable.")
    parser.add_argument("--o", type=parse_complex, help="Reference point of deformation potentials.")
    parser.add_argument("--z", type=parse_complex, action="append", default=[], help="Target point, repeatable.")
    parser.add_argument("--anchor", type=parse_complex, help="Anchor pole of envelope sections.")
    parser.add_argument("--route", type=parse_complex, action="append", default=[], help="Route waypoint, repeatable.")
    parser.add_argument("--reference", type=parse_complex, help="Reference point of envelope sections.")
    parser.add_argument("--function", default="exp", help="Name of the integrated function.")
    parser.add_argument("--suite", choices=SUITES, default="all", help="Properties to verify.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging, repeatable.")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig.from_args(args)
    except ValueError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INVALID

    return run(config)


if __name__ == "__main__":
    sys.exit(main())
