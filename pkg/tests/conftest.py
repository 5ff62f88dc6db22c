import numpy as np
import pytest

from causallp.builder import build_kg, network_from_ceg
from causallp.fixtures import load_reference
from causallp.ingest import preprocess

REFERENCE_EDGES = [("E", "A"), ("E", "G"), ("E", "C"), ("A", "C"), ("A", "G"), ("G", "C"), ("C", "H")]


@pytest.fixture(scope="session")
def ref_cegs():
    cegs, report = preprocess(load_reference())
    return cegs


@pytest.fixture(scope="session")
def ref_networks(ref_cegs):
    return [network_from_ceg(c) for c in ref_cegs]


@pytest.fixture(scope="session")
def ref_kg(ref_networks):
    return build_kg(ref_networks)


def random_dag(rng, n_nodes, p, prefix="n"):
    """Edges only from lower to higher index; returns (names, pairs)."""
    names = [f"{prefix}{i}" for i in range(n_nodes)]
    pairs = [(names[i], names[j]) for j in range(n_nodes) for i in range(j) if rng.random() < p]
    return names, pairs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting -----------------------------------------------------------

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; returns the verdict
    so tests can assert on it after recording."""

    def record(number, title, ok, detail=""):
        _ACCEPTANCE.append((number, title, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
