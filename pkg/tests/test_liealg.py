from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmat.errors import BadSlot, NotFiniteType, UnsupportedRank
from drmat.liealg import (AlgebraElement, CartanDatum, bracket, build_simple_lie_algebra, casimir_omega,
                          omega_exact, tensor_act, tensor_product)


@pytest.mark.parametrize("name,n_pos,dim", [("A1", 1, 3), ("A2", 3, 8), ("A3", 6, 15), ("B2", 4, 10), ("G2", 6, 14)])
def test_root_counts(name, n_pos, dim):
    alg = build_simple_lie_algebra(name)
    assert len(alg.roots.positive_roots) == n_pos
    assert alg.dim == dim == alg.rank + 2 * n_pos


def test_sl2_relations(algebras):
    alg = algebras["A1"]
    e, f, h = alg.e((1,)), alg.f((1,)), alg.h(0)
    assert bracket(e, f) == h
    assert bracket(h, e) == e * 2
    assert bracket(h, f) == f * -2


def test_a2_bracket_of_simple_roots(algebras):
    alg = algebras["A2"]
    out = bracket(alg.e((1, 0)), alg.e((0, 1)))
    assert out.support() == [alg.e_index[(1, 1)]]
    assert abs(out.coeffs[alg.e_index[(1, 1)]]) == 1


@pytest.mark.parametrize("name", ["A2", "B2", "G2"])
def test_weight_action(name):
    alg = build_simple_lie_algebra(name)
    for r in alg.roots.positive_roots:
        h_alpha = AlgebraElement(alg, np.array([Fraction(0)] * alg.dim, dtype=object))
        sharp = alg.sharp_exact(r)
        for i in range(alg.rank):
            h_alpha = h_alpha + alg.h(i) * sharp[i]
        lhs = np.array(bracket(h_alpha, alg.e(r)).coeffs, dtype=float)
        rhs = np.array(alg.e(r).coeffs, dtype=float) * alg.inner(r, r)
        assert np.allclose(lhs, rhs, atol=1e-14)


def test_not_finite_type():
    with pytest.raises(NotFiniteType):
        CartanDatum.from_matrix([[2, -3], [-3, 2]])


def test_rank_limit():
    with pytest.raises(UnsupportedRank):
        CartanDatum.from_type("A", 9)


def test_casimir_sl2(algebras):
    alg = algebras["A1"]
    om = casimir_omega(alg)
    assert complex(om.coeff("e1", "f1")) == pytest.approx(1)
    assert complex(om.coeff("f1", "e1")) == pytest.approx(1)
    assert complex(om.coeff("h1", "h1")) == pytest.approx(0.5)
    assert np.allclose(np.asarray(om.coeffs, dtype=complex), np.asarray(om.swap().coeffs, dtype=complex))


@pytest.mark.parametrize("name", ["A2", "B2", "G2"])
def test_casimir_matches_exact(name):
    alg = build_simple_lie_algebra(name)
    assert np.allclose(np.asarray(casimir_omega(alg).coeffs, dtype=complex), np.array(omega_exact(alg).coeffs, dtype=float), atol=1e-12)


def test_tensor_act(algebras):
    alg = algebras["A1"]
    e, f, h = alg.e((1,)), alg.f((1,)), alg.h(0)
    ef = tensor_product(e, f)
    assert np.array_equal(tensor_act(h, 1, ef).coeffs, (ef * 2).coeffs)
    assert np.array_equal(tensor_act(e, 2, ef).coeffs, tensor_product(e, h).coeffs)
    with pytest.raises(BadSlot):
        tensor_act(e, 3, ef)


def _random_element(alg, seed):
    rng = np.random.default_rng(seed)
    return AlgebraElement(alg, rng.normal(size=alg.dim) + 0j)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), name=st.sampled_from(["A2", "B2", "G2"]))
def test_jacobi_and_antisymmetry(seed, name):
    alg = build_simple_lie_algebra(name)
    x, y, z = (_random_element(alg, seed + k) for k in range(3))
    jac = bracket(x, bracket(y, z)) + bracket(y, bracket(z, x)) + bracket(z, bracket(x, y))
    assert jac.is_zero(1e-10)
    assert (bracket(x, y) + bracket(y, x)).is_zero(1e-12)
    assert bracket(x, x).is_zero(1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), name=st.sampled_from(["A1", "A2", "B2", "G2"]))
def test_casimir_invariance(seed, name):
    alg = build_simple_lie_algebra(name)
    x = _random_element(alg, seed)
    om = casimir_omega(alg)
    total = tensor_act(x, 1, om) + tensor_act(x, 2, om)
    assert total.norm() < 1e-12
