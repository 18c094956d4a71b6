"""Dense complex matrix arithmetic for the Lie algebras gl_n and sl_n.

Matrices travel between functions as complex numpy arrays; the
``AdjointElement`` and ``GroupElement`` wrappers attach the validation
that a value really belongs to the algebra or the group:

    >>> x = np.diag([1, -1])
    >>> y = np.array([[0, 1], [0, 0]])
    >>> commutator(x, y).tolist() == [[0, 2], [0, 0]]
    True

The commutant of a set of matrices is the numerical kernel of the
stacked commutation maps:

    >>> len(joint_commutant([np.diag([1.0, 2.0])]))
    2
"""

import logging

import numpy as np
from attrs import define, field
from attrs.validators import in_
from scipy.linalg import expm, svd

from meromorphic_envelopes.errors import DimensionError

logger = logging.getLogger(__name__)

TRACE_TOLERANCE = 1e-12
"""Relative trace tolerance for membership in sl_n."""

KERNEL_THRESHOLD = 1e-8
"""Singular values below this fraction of the matrix scale count as zero."""

SINGULAR_CONDITION = 1e14
"""Condition number above which a group element counts as singular."""


def as_matrix(value):
    """Return a square complex array from a matrix-like value.

    :param value: Array-like, ``AdjointElement`` or ``GroupElement``.
    :raises DimensionError: If the value is not a square matrix.
    """
    entries = getattr(value, "entries", value)
    matrix = np.asarray(entries, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"Expected a square matrix, got shape {matrix.shape}")

    return matrix


def frozen_matrix(value):
    matrix = np.array(as_matrix(value), dtype=complex)
    matrix.setflags(write=False)
    return matrix


def _check_same_shape(*matrices):
    shapes = {m.shape for m in matrices}
    if len(shapes) > 1:
        raise DimensionError(f"Matrix shapes do not match: {sorted(shapes)}")


def check_invertible(matrix):
    if not np.all(np.isfinite(matrix)) or np.linalg.cond(matrix) > SINGULAR_CONDITION:
        raise ValueError("Group element is singular at working tolerance")


@define(frozen=True)
class AlgebraSpec:
    """Matrix Lie algebra gl_n or sl_n."""

    family = field(validator=in_(("gl", "sl")))
    n = field(converter=int)

    @n.validator
    def _check_n(self, attribute, value):
        if value < 1:
            raise ValueError(f"Algebra rank must be positive, got {value}")

    def contains(self, matrix):
        """Whether a matrix belongs to the algebra at working tolerance."""
        matrix = as_matrix(matrix)
        if matrix.shape != (self.n, self.n):
            return False

        if self.family == "sl":
            return abs(np.trace(matrix)) <= TRACE_TOLERANCE * (1 + np.linalg.norm(matrix))

        return True

    def validate(self, matrix, name="matrix"):
        """Return the matrix as an array or raise naming the offending value.

        :raises DimensionError: If the shape is not n by n.
        :raises ValueError: If an sl matrix has a trace.
        """
        matrix = as_matrix(matrix)
        if matrix.shape != (self.n, self.n):
            raise DimensionError(f"{name} must be {self.n}x{self.n}, got {matrix.shape}")

        if not self.contains(matrix):
            raise ValueError(f"{name} is not traceless as required by sl_{self.n}")

        return matrix


@define(frozen=True, eq=False)
class AdjointElement:
    """Matrix in a Lie algebra."""

    entries = field(converter=frozen_matrix)
    algebra = field()

    def __attrs_post_init__(self):
        self.algebra.validate(self.entries, "AdjointElement")


@define(frozen=True, eq=False)
class GroupElement:
    """Invertible matrix."""

    entries = field(converter=frozen_matrix)

    def __attrs_post_init__(self):
        check_invertible(self.entries)

    @property
    def det(self):
        return complex(np.linalg.det(self.entries))


def commutator(x, y):
    """Return the bracket xy - yx.

    :raises DimensionError: If the shapes differ.
    """
    x, y = as_matrix(x), as_matrix(y)
    _check_same_shape(x, y)
    return x @ y - y @ x


def adjoint_action(g, e):
    """Return g e g^-1 without forming the inverse.

    :raises ValueError: If g is singular at working tolerance.
    """
    g, e = as_matrix(g), as_matrix(e)
    _check_same_shape(g, e)
    check_invertible(g)
    return np.linalg.solve(g.T, (g @ e).T).T


def kernel_basis(matrix, threshold=KERNEL_THRESHOLD, scale=0.0):
    """Return an orthonormal basis of the numerical kernel, as columns.

    Singular values up to threshold times the larger of scale and the
    largest singular value count as zero. A scale lets a map whose
    singular values are all roundoff, such as the commutation map of a
    scalar matrix, keep its full kernel.
    """
    _, s, vh = svd(np.asarray(matrix))
    cutoff = threshold * max(scale, float(s[0]) if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return vh[rank:].conj().T


def joint_commutant(ms, n=None, threshold=KERNEL_THRESHOLD):
    """Return an orthonormal basis of the matrices commuting with all ms.

    The basis is orthonormal for the Frobenius inner product. With no
    matrices, the whole of gl_n is returned, which requires n.

    :param ms: Matrices of the same size.
    :param n: Matrix size, only needed when ms is empty.
    :param threshold: Singular value cut-off of the kernel, relative to the
        largest matrix norm or singular value.
    """
    matrices = [as_matrix(m) for m in ms]
    if not matrices:
        if n is None:
            raise ValueError("The commutant of no matrices needs the size n")
        return [np.eye(1, n * n, k, dtype=complex).reshape(n, n) for k in range(n * n)]

    _check_same_shape(*matrices)
    size = matrices[0].shape[0]
    identity = np.eye(size)

    # vec(ME - EM) = (I x M - M^T x I) vec(E), with column-major vec.
    stacked = np.vstack([np.kron(identity, m) - np.kron(m.T, identity) for m in matrices])
    kernel = kernel_basis(stacked, threshold, max(np.linalg.norm(m) for m in matrices))
    logger.debug(
        "Commutant of %(count)s matrices has dimension %(dimension)s",
        {"count": len(matrices), "dimension": kernel.shape[1]},
    )
    return [kernel[:, k].reshape((size, size), order="F") for k in range(kernel.shape[1])]


def matrix_exp(a, scale=1.0):
    """Return exp(scale * a) by scaling and squaring with Pade approximants.

    :raises ValueError: If a has non-finite entries.
    :raises OverflowError: If the exponential overflows.
    """
    matrix = as_matrix(a)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("Cannot exponentiate a matrix with non-finite entries")

    result = expm(complex(scale) * matrix)
    if not np.all(np.isfinite(result)):
        raise OverflowError("Matrix exponential overflowed")

    return result


def center_basis(algebra):
    """Return an orthonormal basis of the centre of the algebra."""
    if algebra.family == "gl":
        return [np.eye(algebra.n, dtype=complex) / np.sqrt(algebra.n)]

    return []


def algebra_basis(algebra):
    """Return the elementary basis: E_ij, with E_ii - E_nn on the diagonal for sl."""
    n = algebra.n
    basis = []
    for i in range(n):
        for j in range(n):
            if algebra.family == "sl" and i == j == n - 1:
                continue
            element = np.zeros((n, n), dtype=complex)
            element[i, j] = 1
            if algebra.family == "sl" and i == j:
                element[-1, -1] = -1
            basis.append(element)

    return basis


def project_to_algebra(matrix, algebra):
    """Return the nearest matrix of the algebra in Frobenius norm."""
    matrix = as_matrix(matrix)
    if algebra.family == "sl":
        return matrix - np.trace(matrix) / algebra.n * np.eye(algebra.n)

    return matrix.copy()


def random_element(algebra, rng, scale=1.0):
    """Return a random element of the algebra with Gaussian entries."""
    shape = (algebra.n, algebra.n)
    matrix = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return project_to_algebra(scale * matrix, algebra)
