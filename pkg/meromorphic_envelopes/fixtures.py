"""Pytest fixtures for gauge potentials on the sphere."""

import numpy as np
import pytest

from meromorphic_envelopes.codec import Codec, decode_connection, dumps, load_fixture


def pytest_addoption(parser):
    parser.addoption("--rng-seed", type=int, default=20240517, help="Seed of the seeded_rng fixture.")


def pytest_make_parametrize_id(config, val, argname=None):
    """Show complex values and matrices of parameterized tests as canonical JSON."""
    if isinstance(val, (complex, np.ndarray)):
        return dumps(val, Codec())

    return None


@pytest.fixture
def two_pole_connection():
    """The sl2 potential with residues diag(1/2, -1/2) at -1 and its opposite at 1."""
    return decode_connection(load_fixture("two_pole_sl2.json"))


@pytest.fixture
def single_pole_connection():
    """The sl2 potential with residue diag(1/4, -1/4) at 0, of monodromy diag(i, -i)."""
    return decode_connection(load_fixture("single_pole_sl2.json"))


@pytest.fixture
def three_pole_connection():
    """An sl2 potential with non commuting residues at -1, i and 1 summing to zero."""
    return decode_connection(load_fixture("three_pole_sl2.json"))


@pytest.fixture
def seeded_rng(request):
    """Random generator seeded from the --rng-seed option."""
    return np.random.default_rng(request.config.getoption("--rng-seed", default=20240517))
