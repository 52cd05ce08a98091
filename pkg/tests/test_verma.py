import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmat import verma as vm
from drmat.errors import CapExceeded, NuNotPerp, ShapovalovSingular, TruncationTooSmall
from drmat.suite import make_trace_setup, trace_configurations


@pytest.fixture(scope="module")
def configs():
    return trace_configurations(seed=3, H=3)


def _unit(alg, idx):
    v = np.zeros(alg.dim, dtype=complex)
    v[idx] = 1
    return v


def test_weight_space_dimensions(algebras):
    a1, a2 = algebras["A1"], algebras["A2"]
    m = vm.VermaModule(vm.NegativeNilpotent(a1), [0.3], 3)
    assert [len(m.basis((k,))) for k in range(4)] == [1, 1, 1, 1]
    m2 = vm.VermaModule(vm.NegativeNilpotent(a2), [0.3, 0.7], 2)
    assert len(m2.basis((1, 1))) == 2 == vm.kostant_count(a2, (1, 1))
    assert vm.kostant_count(a2, (2, 2)) == 3


@pytest.mark.parametrize("name", ["A2", "B2"])
def test_casimir_acts_by_scalar(algebras, name):
    m = vm.VermaModule(vm.NegativeNilpotent(algebras[name]), [0.41 + 0.2j, -0.13], 3)
    assert m.casimir_defect() < 1e-10


def test_cap(algebras):
    with pytest.raises(CapExceeded):
        vm.VermaModule(vm.NegativeNilpotent(algebras["A1"]), [0.3], vm.MAX_HEIGHT + 1)


def test_ef_on_highest_weight(algebras):
    alg = algebras["A2"]
    mu = np.array([0.37, -0.21 + 0.4j])
    m = vm.VermaModule(vm.NegativeNilpotent(alg), mu, 2)
    unit = m.nil.unit
    for i in range(alg.rank):
        s = alg.simple_root(i)
        fv = m.act(alg.f_index[s], unit)
        efv = m.act_vector(alg.e_index[s], fv)
        assert set(efv) == {unit}
        assert efv[unit] == pytest.approx(m.h_value(i, unit))


def test_sl2_adjoint_intertwiner(algebras):
    alg = algebras["A1"]
    mu = 0.37 + 0.1j
    m = vm.VermaModule(vm.NegativeNilpotent(alg), [mu], 3)
    phi = vm.build_intertwiner(m, vm.adjoint_module(alg), _unit(alg, alg.h_index[0]), (0,))
    deg1 = phi.singular[(1,)]
    # degree-one part is c f v_mu (x) e with c = 2 / <mu, h>
    assert deg1[alg.e_index[(1,)]] == pytest.approx(2 / (2 * mu))
    assert phi.raising_defect() < 1e-12


def test_trivial_intertwiner_is_inclusion(algebras):
    alg = algebras["A1"]
    m = vm.VermaModule(vm.NegativeNilpotent(alg), [0.3], 3)
    phi = vm.build_intertwiner(m, vm.trivial_module(alg), np.ones(1, dtype=complex), (0,))
    assert list(phi.singular) == [m.nil.unit]
    out = phi.phi((2,))
    assert out[(2,)] == pytest.approx(1)
    assert all(np.all(v == 0) for k, v in out.items() if k != (2,))


def test_kac_kazhdan_locus(algebras):
    alg = algebras["A1"]
    m = vm.VermaModule(vm.NegativeNilpotent(alg), [0.0], 3)
    with pytest.raises(ShapovalovSingular):
        vm.build_intertwiner(m, vm.adjoint_module(alg), _unit(alg, alg.h_index[0]), (0,))


def test_twist_identity_and_swap(triples):
    an = triples["A1 id"]
    tw = vm.VermaTwist(an, vm.NegativeNilpotent(an.alg))
    assert tw.apply((2,)) == {(2,): 1}
    sw = triples["A2 swap"]
    nil = vm.NegativeNilpotent(sw.alg)
    tw = vm.VermaTwist(sw, nil)
    order = nil.order
    mono = tuple(int(r == (1, 0)) for r in order)
    assert tw.apply(mono) == {tuple(int(r == (0, 1)) for r in order): 1}
    mono = tuple(int(r == (1, 1)) for r in order)
    assert tw.apply(mono) == {mono: -1}
    ch = triples["A2 chain"]
    tw = vm.VermaTwist(ch, vm.NegativeNilpotent(ch.alg))
    assert tw.apply(tuple(int(r == (0, 1)) for r in order)) == {}


def test_twist_relations(triples):
    an = triples["A2 swap"]
    sol = vm.solve_weight_constraint(an, np.zeros(2), [0.31 + 0.2j])
    nil = vm.NegativeNilpotent(an.alg)
    src = vm.VermaModule(nil, sol.mu_prime, 3)
    tgt = vm.VermaModule(nil, sol.mu, 3)
    tw = vm.twist_on_verma(an, src, tgt)
    assert vm.twist_relation_defect(an, tw, src, tgt) < 1e-12


def test_weight_constraint(triples, rng):
    an = triples["A1 id"]
    sol = vm.solve_weight_constraint(an, [0.0], [0.4])
    assert np.allclose(sol.mu, sol.mu_prime)
    with pytest.raises(NuNotPerp):
        vm.solve_weight_constraint(an, [1.0], [0.4])
    sw = triples["A2 swap"]
    assert vm.solve_weight_constraint(sw, [1.0, -1.0], [0.3]).residual < 1e-14
    ch = triples["A3 chain"]
    h0 = np.array(ch.h0_basis, dtype=float)
    for _ in range(5):
        nu = ch.alg.flat(rng.normal(size=len(h0)) @ h0).real
        assert vm.solve_weight_constraint(ch, nu, rng.normal(size=ch.l_dim)).residual < 1e-12


def test_delta_b_closed_values(triples):
    an = triples["A2 swap"]
    lam = np.array([np.log(2) / an.root_pairing((1, 0), [1.0])])
    assert vm.delta_b_closed(an, lam) == pytest.approx(15 / 4)
    a1 = triples["A1 id"]
    lam = np.array([0.7])
    x = np.exp(-a1.root_pairing((1,), lam))
    assert vm.delta_b_closed(a1, lam) == pytest.approx(x ** -0.5 * (1 - x))


@pytest.mark.parametrize("name", ["A1 id", "A2 swap", "A3 chain"])
def test_delta_b_series_matches_closed(triples, name, rng):
    an = triples[name]
    series = vm.delta_b(an, 6)
    lam = rng.uniform(2.0, 3.0, an.l_dim)
    assert series.evaluate(lam) == pytest.approx(vm.delta_b_closed(an, lam), rel=1e-3)
    assert max(vm.reciprocity_defect(an, 6).values()) < 1e-12


def test_r0_trace_is_reciprocal(configs):
    setup = configs["A1 id r=0"]
    prod = vm.delta_b_product(setup.an, setup.H).convolve(vm.trace_function(setup), lambda a, b: a * b)
    zero = vm.class_key(setup.an, (0,))
    for k, c in prod.terms.items():
        assert abs(c - (1 if k == zero else 0)) < 1e-12


def test_trace_independent_of_pbw_order(triples):
    an = triples["A2 swap"]
    alg = an.alg
    ad = vm.adjoint_module(alg)
    v = _unit(alg, alg.h_index[0]) + 0.3 * _unit(alg, alg.h_index[1])
    rng = np.random.default_rng(5)
    s1 = make_trace_setup(an, [ad], [v], [(0, 0)], rng, 3)
    rev = tuple(reversed(vm.NegativeNilpotent(alg).order))
    s2 = vm.TraceSetup(an, [ad], [v], [(0, 0)], s1.solution, 3, order=rev)
    t1, t2 = vm.trace_function(s1), vm.trace_function(s2)
    for k, c in t1.terms.items():
        assert np.max(np.abs(c - t2.terms[k])) < 1e-12


def test_trace_is_l_weight_zero(configs):
    setup = configs["A2 swap r=2"]
    an = setup.an
    ad = setup.modules[0]
    for _, beta, c in vm.trace_function(setup).items():
        for x in an.I1:
            hx = ad.cartan_action(x)
            act = np.einsum("ij,jk->ik", hx, c) + np.einsum("ij,kj->ki", hx, c)
            assert np.max(np.abs(act)) < 1e-10


@pytest.mark.parametrize("name", ["A1 id r=1", "A1 id r=2", "A2 swap r=1", "A2 swap r=2"])
def test_kzb(configs, name):
    setup = configs[name]
    ff = vm.normalized_trace(setup)
    for i in range(1, len(setup.modules) + 1):
        assert vm.kzb_residual(setup, i, ff).max_residual < 1e-9


@pytest.mark.parametrize("name", ["A1 id r=2", "A2 swap r=2"])
def test_kzb_detects_perturbed_r(configs, name):
    setup = configs[name]
    alg = setup.an.alg
    pert = np.zeros((alg.dim, alg.dim))
    pert[alg.e_index[alg.simple_root(0)], alg.f_index[alg.simple_root(0)]] = 0.01
    assert vm.kzb_residual(setup, 1, perturb=pert).max_residual > 1e-4


def test_kzb_height_check(configs):
    setup = configs["A1 id r=1"]
    with pytest.raises(TruncationTooSmall):
        vm.kzb_residual(setup, 1, H=setup.H + 1)


@pytest.mark.parametrize("name", ["A1 id r=0", "A1 id r=1", "A1 id r=2", "A2 swap r=1", "A2 swap r=2"])
def test_second_order(configs, name):
    setup = configs[name]
    assert vm.second_order_residual(setup).max_residual < 1e-9


@pytest.mark.parametrize("name", ["A1 id", "A2 swap", "A3 chain", "A2 chain"])
def test_weyl_identity(triples, name):
    assert vm.weyl_denominator_identity(triples[name], 5).max_residual < 1e-10


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_commutator_on_invariant_series(triples, seed):
    an = triples["A1 id"]
    ad = vm.adjoint_module(an.alg)
    w = vm.random_invariant_series(an, [ad, ad], 3, np.random.default_rng(seed))
    assert vm.kzb_commutator_residual(an, [ad, ad], w).max_residual < 1e-9
