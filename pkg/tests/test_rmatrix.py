from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmat import rmatrix as rm
from drmat.errors import NearPole
from drmat.suite import sl3_swap_reference


def _lam_with_y(an, root, y):
    """I1 coordinates with exp(-(root, lambda)) = y (l one-dimensional)."""
    unit = an.root_pairing(root, [1.0])
    return np.array([-np.log(y) / unit])


def test_sl2_at_half(triples):
    an = triples["A1 id"]
    r = rm.eval_r(an, _lam_with_y(an, (1,), 0.5)).tensor
    assert complex(r.coeff("e1", "f1")) == pytest.approx(1)
    assert complex(r.coeff("f1", "e1")) == pytest.approx(-2)
    assert complex(r.coeff("h1", "h1")) == pytest.approx(-0.25)  # -x (x) x / 2 with x = h / sqrt 2


def test_sl3_swap_at_half(triples):
    an = triples["A2 swap"]
    r = rm.eval_r(an, _lam_with_y(an, (1, 0), 0.5)).tensor
    expect = {("f10", "e10"): -4 / 3, ("e11", "f11"): -1 / 5, ("f11", "e11"): -4 / 5,
              ("e10", "f01"): 2 / 3, ("f01", "e10"): -2 / 3, ("e10", "f10"): 1 / 3}
    for (a, b), v in expect.items():
        assert complex(r.coeff(a, b)) == pytest.approx(v, abs=1e-14), (a, b)


def test_sl3_swap_reference_agrees(triples, rng):
    an = triples["A2 swap"]
    for _ in range(5):
        lam = rm.sample_lambda(an, rng)
        assert np.max(np.abs(rm.eval_r(an, lam).tensor.coeffs - sl3_swap_reference(an, lam))) < 1e-12


def test_felder_reduction(triples, rng):
    for name in ("A1 id", "A2 id", "B2 id"):
        an = triples[name]
        lam = rm.sample_lambda(an, rng)
        assert np.max(np.abs(rm.eval_r(an, lam).tensor.coeffs - rm.felder_r(an.alg, an.lambda_to_h(lam)))) < 1e-12


def test_series_sl2_geometric(triples):
    an = triples["A1 id"]
    terms = rm.expand_r_series(an, 3)
    alg = an.alg
    e, f = alg.e_index[(1,)], alg.f_index[(1,)]
    assert [t.beta for t in terms] == [(0,), (1,), (2,), (3,)]
    for t in terms[1:]:
        assert t.tensor[e, f] == 1 and t.tensor[f, e] == -1


def test_series_sl3_alternating(triples):
    an = triples["A2 swap"]
    alg = an.alg
    e, f = alg.e_index[(1, 1)], alg.f_index[(1, 1)]
    signs = {t.beta: t.tensor[e, f] for t in rm.expand_r_series(an, 4) if t.beta[0] == t.beta[1] and t.beta[0] > 0}
    assert signs == {(1, 1): -1, (2, 2): 1, (3, 3): -1, (4, 4): 1}
    assert all(isinstance(v, Fraction) or isinstance(v, int) for v in signs.values())


@pytest.mark.parametrize("name", ["A1 id", "A2 swap", "A3 chain", "A3 flip"])
def test_series_sums_to_closed_form(triples, name, rng):
    an = triples[name]
    terms = rm.expand_r_series(an, 80)
    for _ in range(10):
        lam = rm.sample_lambda(an, rng, lo=1.0, hi=3.0)
        resid = np.max(np.abs(rm.sum_series(an, terms, lam) - rm.eval_r(an, lam).tensor.coeffs))
        assert resid < 1e-12


def test_near_pole(triples):
    an = triples["A1 id"]
    with pytest.raises(NearPole):
        rm.eval_r(an, _lam_with_y(an, (1,), 1 + 1e-12))
    assert rm.pole_margin(an, _lam_with_y(an, (1,), 0.5)) == pytest.approx(0.5)  # |1 - y| with N = 1


@pytest.mark.parametrize("name", ["A1 id", "A2 id", "B2 id", "A2 swap", "A3 flip", "A3 chain", "A2 chain"])
def test_cdybe(triples, name, rng):
    an = triples[name]
    for _ in range(4):
        rep = rm.cdybe_residual(an, rm.sample_lambda(an, rng), method="both")
        assert rep.norm < 1e-9 and rep.derivative_gap < 1e-4


def test_dropped_cayley_breaks_cdybe(triples, rng):
    an = triples["A3 chain"]
    assert rm.cdybe_residual(an, rm.sample_lambda(an, rng), drop_cayley=True).norm > 1e-3


@settings(max_examples=30, deadline=None)
@given(re=st.floats(0.2, 3.0), im=st.floats(-1.0, 1.0), name=st.sampled_from(["A2 swap", "A3 flip", "A3 chain"]))
def test_structure_properties(triples, re, im, name):
    an = triples[name]
    lam = np.full(an.l_dim, complex(re, im)) * np.linspace(1.0, 1.3, an.l_dim)
    try:
        r = rm.eval_r(an, lam).tensor.coeffs
    except NearPole:
        return
    assert rm.symmetric_defect(an, r) < 1e-10
    assert rm.l_invariance_defect(an, r) < 1e-10
