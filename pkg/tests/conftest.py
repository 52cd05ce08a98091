import numpy as np
import pytest

from drmat.liealg import build_simple_lie_algebra
from drmat.triple import TripleSpec, analyze_triple


@pytest.fixture(scope="session")
def algebras():
    return {name: build_simple_lie_algebra(name) for name in ("A1", "A2", "A3", "B2", "G2")}


@pytest.fixture(scope="session")
def triples(algebras):
    a = algebras
    return {
        "A1 id": analyze_triple(a["A1"], TripleSpec.identity(1)),
        "A2 id": analyze_triple(a["A2"], TripleSpec.identity(2)),
        "A2 swap": analyze_triple(a["A2"], TripleSpec.make([0, 1], [0, 1], {0: 1, 1: 0})),
        "A2 chain": analyze_triple(a["A2"], TripleSpec.make([0], [1], {0: 1})),
        "A3 flip": analyze_triple(a["A3"], TripleSpec.make([0, 1, 2], [0, 1, 2], {0: 2, 1: 1, 2: 0})),
        "A3 chain": analyze_triple(a["A3"], TripleSpec.make([0, 1], [1, 2], {0: 1, 1: 2})),
        "B2 id": analyze_triple(a["B2"], TripleSpec.identity(2)),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
