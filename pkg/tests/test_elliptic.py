import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmat import elliptic as el
from drmat.errors import CutoffTooSmall, NearLatticeZero, NotAutomorphism

TAU = 0.8j


@pytest.fixture(scope="module")
def bank():
    return {
        "A1 id": el.build_affine_triple("A1", (0, 1)),
        "A1 swap": el.build_affine_triple("A1", (1, 0)),
        "A2 rot": el.build_affine_triple("A2", el.rotation(3, 1)),
        "A2 flip": el.build_affine_triple("A2", (0, 2, 1)),
        "A3 flip": el.build_affine_triple("A3", (2, 3, 0, 1)),
        "B2 id": el.build_affine_triple("B2", (0, 1, 2)),
    }


def test_theta_zero_and_odd(rng):
    assert abs(el.theta(0.0, TAU)) < 1e-15
    for _ in range(10):
        u = complex(*rng.uniform(-1, 1, 2))
        assert abs(el.theta(-u, TAU) + el.theta(u, TAU)) < 1e-12 * max(1, abs(el.theta(u, TAU)))


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-1, 1), y=st.floats(-0.6, 0.6), t=st.floats(0.5, 1.5), s=st.floats(-0.5, 0.5))
def test_quasi_periodicity(x, y, t, s):
    res = el.theta_identity_residuals(complex(x, y), complex(s, t))
    assert max(res.values()) < 1e-12


def test_sigma_laurent_limit():
    w = 0.3 + 0.1j
    for u in (1e-4, 1e-5j):
        assert el.sigma(w, u, TAU) * u == pytest.approx(1, abs=1e-3)


def test_near_lattice_zero():
    with pytest.raises(NearLatticeZero):
        el.chi(1e-10, TAU)
    with pytest.raises(NearLatticeZero):
        el.sigma(0.3, 1 + TAU + 1e-10, TAU)


def test_rejects_non_automorphism():
    with pytest.raises(NotAutomorphism):
        el.build_affine_triple("B2", (0, 2, 1))
    with pytest.raises(NotAutomorphism):
        el.build_affine_triple("A2", (0, 1, 1))


def test_affine_data(bank):
    assert bank["A1 id"].g == 2 and bank["A1 swap"].order == 2 and bank["A2 rot"].order == 3
    assert bank["A1 swap"].l_dim == 0 and bank["A2 rot"].l_dim == 0
    assert bank["A1 id"].l_dim == 1 and bank["A2 flip"].l_dim == 1
    for at in bank.values():
        assert el.orbit_count_consistent(at)
        beta_n = at.beta_powers[at.order] if len(at.beta_powers) > at.order else np.linalg.matrix_power(at.beta, at.order)
        assert np.allclose(beta_n, np.eye(at.alg.dim), atol=1e-10)


def test_series_needs_annulus(bank):
    with pytest.raises(CutoffTooSmall):
        el.eval_r_bar_series(bank["A1 id"], [0.1], 0.1 + 0.1j, TAU)


@pytest.mark.parametrize("name", ["A1 id", "A1 swap", "A2 rot", "A2 flip", "A3 flip", "B2 id"])
def test_oracle(bank, name, rng):
    at = bank[name]
    for _ in range(3):
        lam = el.sample_elliptic_lambda(at, rng)
        u = el.sample_u(rng, TAU, at.g)
        m = el.cutoff_for_bound(at, lam, u, TAU, 1e-8)
        assert el.oracle_comparison(at, lam, u, TAU, m)["ok"]


def test_truncation_monotone(bank, rng):
    at = bank["A1 id"]
    lam = el.sample_elliptic_lambda(at, rng)
    u = el.sample_u(rng, TAU, at.g)
    closed = el.eval_r_bar_closed(at, lam, u, TAU).tensor
    errs = [np.max(np.abs(el.eval_r_bar_series(at, lam, u, TAU, m).tensor - closed)) for m in (8, 16, 32)]
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("name", ["A1 id", "A1 swap", "A2 rot", "A2 flip"])
def test_spectral_cdybe(bank, name, rng):
    at = bank[name]
    for _ in range(3):
        lam = el.sample_elliptic_lambda(at, rng)
        us = rng.uniform(-0.5, 0.5, 3) + 1j * rng.uniform(-0.3, 0.3, 3)
        assert el.cdybe_spectral_residual(at, lam, *us, TAU).norm < 1e-7


def test_chi_mutation_detected(bank, rng):
    at = bank["A1 id"]
    lam = el.sample_elliptic_lambda(at, rng)
    us = rng.uniform(-0.5, 0.5, 3) + 1j * rng.uniform(-0.3, 0.3, 3)
    assert el.cdybe_spectral_residual(at, lam, *us, TAU, chi_scale=1.01).norm > 1e-3


@pytest.mark.parametrize("name", ["A1 swap", "A2 rot"])
def test_belavin_points_are_non_dynamical(bank, name):
    at = bank[name]
    assert at.dynamical_parameters == 0
    assert el.lambda_dependence(at, np.zeros(0), 0.2 - 0.1j, TAU) == 0.0


def test_dynamical_case_depends_on_lambda(bank):
    at = bank["A1 id"]
    assert el.lambda_dependence(at, [0.2], 0.2 - 0.1j, TAU) > 1e-3


@pytest.mark.parametrize("name", ["A1 id", "A2 flip"])
def test_r_bar_l_weight_zero(bank, name, rng):
    at = bank[name]
    lam = el.sample_elliptic_lambda(at, rng)
    u = el.sample_u(rng, TAU, at.g)
    assert el.l_weight_defect(at, el.eval_r_bar_closed(at, lam, u, TAU).tensor) < 1e-10


@pytest.mark.parametrize("name", ["A1 id", "A1 swap", "A2 flip"])
def test_s_bar(bank, name, rng):
    at = bank[name]
    lam = el.sample_elliptic_lambda(at, rng)
    u = el.sample_u(rng, TAU, at.g)
    s = el.eval_S_bar_series(at, lam, u, TAU, 24)
    assert el.l_weight_defect(at, s.tensor) < 1e-10
    assert np.all(np.isfinite(s.tensor))
    s2 = el.eval_S_bar_series(at, lam, u, TAU, 36)
    assert np.max(np.abs(s.tensor - s2.tensor)) < 10 * s.tail_bound + 1e-12


def test_theta_residual_is_sensitive():
    u, tau = 0.21 + 0.13j, 0.1 + 0.9j
    wrong = abs(el.theta(u + tau, tau) - np.exp(-1j * np.pi * tau - 2j * np.pi * u) * el.theta(u, tau))
    assert wrong > 1e-3
    assert max(el.theta_identity_residuals(u, tau).values()) < 1e-14


def test_s_bar_halves_are_swaps(bank, rng):
    at = bank["A2 flip"]
    lam = el.sample_elliptic_lambda(at, rng)
    u = el.sample_u(rng, TAU, at.g)
    a = el.eval_S_bar_series(at, lam, u, TAU, 24)
    b = el.eval_S_bar_series(at, lam, -u, TAU, 24)
    assert np.max(np.abs(a.first)) > 1e-3
    assert np.max(np.abs(a.first.T - b.second)) < 1e-12
