import json

import numpy as np
import pytest

from drmat.errors import BadTripleFile, NotBijective, NotIsometric, OutsideDomain
from drmat.liealg import build_simple_lie_algebra
from drmat.triple import TripleSpec, analyze_triple, b_apply, validate_triple


def test_valid_examples(algebras):
    validate_triple(algebras["A2"], TripleSpec.make([0, 1], [0, 1], {0: 1, 1: 0}))
    validate_triple(algebras["A2"], TripleSpec.make([0], [1], {0: 1}))


def test_length_mismatch_rejected(algebras):
    with pytest.raises(NotIsometric):
        validate_triple(algebras["B2"], TripleSpec.make([0], [1], {0: 1}))


def test_non_bijective_rejected(algebras):
    with pytest.raises(NotBijective):
        validate_triple(algebras["A3"], TripleSpec.make([0, 2], [1, 1], {0: 1, 2: 1}))


def test_json_roundtrip():
    spec = TripleSpec.make([0, 1], [1, 2], {0: 1, 1: 2})
    assert TripleSpec.from_json(json.dumps(spec.to_dict())) == spec
    with pytest.raises(BadTripleFile):
        TripleSpec.from_json('{"gamma1": [1]}')
    with pytest.raises(BadTripleFile):
        TripleSpec.from_json("not json")


@pytest.mark.parametrize("name", ["A1", "A2", "B2", "G2"])
def test_identity_triple(name):
    alg = build_simple_lie_algebra(name)
    an = analyze_triple(alg, TripleSpec.identity(alg.rank))
    assert an.gamma3 == tuple(range(alg.rank))
    assert an.h0_basis == [] and an.nondegenerate
    assert set(an.n_table.values()) == {1}
    assert all(th == 1 for th in an.theta_table.values())


def test_sl3_swap_data(triples):
    an = triples["A2 swap"]
    assert an.gamma3 == (0, 1) and an.l_dim == 1
    # l is spanned by rho^sharp, which is proportional to h1 + h2
    v = np.array(an.l_basis[0], dtype=float)
    assert np.isclose(v[0], v[1])
    assert an.n_table[(1, 0)] == an.n_table[(0, 1)] == 2
    assert an.n_table[(1, 1)] == 1
    assert an.theta_table[(1, 0)] == 1 and an.theta_table[(1, 1)] == -1


def test_chain_is_nilpotent_and_skew(triples):
    an = triples["A3 chain"]
    assert an.gamma3 == () and len(an.h0_basis) == 2 and an.nondegenerate
    c = np.array(an.cayley, dtype=float)
    assert np.any(c != 0)
    g = np.array(an.h0_basis, dtype=float) @ an.alg.h_gram_float @ np.array(an.h0_basis, dtype=float).T
    # C is skew for the restricted form: g C + (g C)^T = 0
    assert np.allclose(g @ c + (g @ c).T, 0, atol=1e-12)


@pytest.mark.parametrize("name", ["A2 swap", "A3 flip", "A2 chain"])
def test_cayley_vanishes(triples, name):
    assert np.allclose(np.array(triples[name].cayley, dtype=float), 0)


def test_b_images(triples):
    an = triples["A2 swap"]
    alg = an.alg
    assert b_apply(an.bmap, alg.f((1, 0)), 1) == alg.f((0, 1))
    assert b_apply(an.bmap, alg.f((1, 1)), 1) == alg.f((1, 1)) * -1
    ch = triples["A2 chain"]
    assert b_apply(ch.bmap, alg.f((1, 0)), 1) == alg.f((0, 1))
    assert b_apply(ch.bmap, alg.f((0, 1)), 1).is_zero()
    assert b_apply(ch.bmap, alg.f((1, 1)), 1).is_zero()
    with pytest.raises(OutsideDomain):
        b_apply(ch.bmap, alg.h(1), 1)


def test_b_is_homomorphism(triples):
    from drmat.liealg import bracket

    for name in ("A2 swap", "A3 flip", "A3 chain"):
        an = triples[name]
        alg = an.alg
        for r1 in alg.roots.positive_roots:
            for r2 in alg.roots.positive_roots:
                x, y = alg.f(r1), alg.f(r2)
                lhs = b_apply(an.bmap, bracket(x, y), 1)
                rhs = bracket(b_apply(an.bmap, x, 1), b_apply(an.bmap, y, 1))
                assert lhs == rhs, (name, r1, r2)


def test_report_is_json(triples):
    json.dumps(triples["A3 chain"].report())
