"""The trigonometric dynamical r-matrix of a triple and its CDYBE check.

``lambda`` is always given by its coordinates in the orthonormal basis ``I1``
of ``l``.  Wedges are ``a ^ b = a (x) b - b (x) a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _exact as ex
from .errors import MethodDisagreement, NearPole
from .liealg import TensorElement
from .triple import TripleAnalysis

EPS_POLE = 1e-8


@dataclass
class RMatrixValue:
    lam: np.ndarray
    tensor: TensorElement
    pole_margin: float


@dataclass
class RSeriesTerm:
    beta: tuple[int, ...]
    tensor: np.ndarray  # exact (object dtype) coefficients in g (x) g


@dataclass
class CdybeReport:
    residual: np.ndarray
    norm: float
    method: str
    lam: np.ndarray
    derivative_gap: float | None = None
    samples: list = field(default_factory=list)


def cartan_part_exact(an: TripleAnalysis, include_cayley: bool = True) -> np.ndarray:
    """``-1/2 sum x_j (x) x_j + 1/2 sum_{I2} C_T x_i (x) x_i`` over dual bases."""
    alg = an.alg
    n = alg.rank
    out = np.array([[Fraction(0)] * alg.dim for _ in range(alg.dim)], dtype=object)
    off = alg.n_pos
    for i in range(n):
        for j in range(n):
            out[off + i, off + j] -= alg.h_gram_inv[i][j] / 2
    if include_cayley and an.h0_basis:
        gh = alg.h_gram
        u = an.h0_basis
        g0 = [[ex.dot(a_, b_, gh) for b_ in u] for a_ in u]
        g0inv = ex.inverse(g0)
        cu = []
        for k in range(len(u)):
            cu.append([sum((an.cayley[m][k] * u[m][j] for m in range(len(u))), Fraction(0)) for j in range(n)])
        dual = [[sum((g0inv[k][m] * u[m][j] for m in range(len(u))), Fraction(0)) for j in range(n)] for k in range(len(u))]
        for k in range(len(u)):
            for i in range(n):
                for j in range(n):
                    out[off + i, off + j] += cu[k][i] * dual[k][j] / 2
    return out


def _nilpotent_part(an: TripleAnalysis) -> np.ndarray:
    alg = an.alg
    out = np.zeros((alg.dim, alg.dim))
    for r in alg.roots.positive_roots:
        out[alg.f_index[r], alg.e_index[r]] -= 1.0
    return out


def _wedge(alg, e_idx: int, fvec: np.ndarray) -> np.ndarray:
    w = np.zeros((alg.dim, alg.dim), dtype=complex)
    w[e_idx, :] += fvec
    w[:, e_idx] -= fvec
    return w


class _Cache:
    """Per-analysis float data reused across many lambda evaluations."""

    def __init__(self, an: TripleAnalysis):
        alg = an.alg
        self.const = np.array(cartan_part_exact(an), dtype=float) + _nilpotent_part(an)
        self.const_no_cayley = np.array(cartan_part_exact(an, False), dtype=float) + _nilpotent_part(an)
        self.roots = []
        for r in alg.roots.positive_roots:
            imgs = an.b_images.get(r, [])
            if not imgs:
                continue
            wedges = [(l, _wedge(alg, alg.e_index[r], img.coeffs.astype(complex))) for l, img in imgs]
            if r in an.n_table:
                self.roots.append((r, "cyclic", an.n_table[r], complex(an.theta_table[r]), wedges[: an.n_table[r]]))
            else:
                self.roots.append((r, "finite", None, None, wedges))
        # (alpha, x_i) for the l basis, per root
        self.alpha_x = {r: np.array([alg.pair(r, x) for x in an.I1]) for r, *_ in self.roots}


def _cache(an: TripleAnalysis) -> _Cache:
    c = getattr(an, "_rcache", None)
    if c is None:
        c = _Cache(an)
        an._rcache = c  # type: ignore[attr-defined]
    return c


def pole_margin(an: TripleAnalysis, lam) -> float:
    cache = _cache(an)
    margin = np.inf
    for r, kind, nn, th, _ in cache.roots:
        if kind == "cyclic":
            y = np.exp(-an.root_pairing(r, lam))
            margin = min(margin, abs(1 - th * y**nn))
    return float(margin)


def r_coefficients(an: TripleAnalysis, lam, eps_pole: float = EPS_POLE, drop_cayley: bool = False, derivative: bool = False):
    """Dense coefficient matrix of ``r_T(lambda)``; optionally its l-derivatives."""
    cache = _cache(an)
    alg = an.alg
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    out = (cache.const_no_cayley if drop_cayley else cache.const).astype(complex)
    d_out = np.zeros((an.l_dim, alg.dim, alg.dim), dtype=complex)
    margin = np.inf
    for r, kind, nn, th, wedges in cache.roots:
        y = np.exp(-an.root_pairing(r, lam))
        ax = cache.alpha_x[r]
        if kind == "cyclic":
            den = 1 - th * y**nn
            margin = min(margin, abs(den))
            if abs(den) < eps_pole:
                raise NearPole(f"|1 - theta e^(-N(a,lambda))| = {abs(den):.3e} for root {r}")
            num = sum(y**l * w for l, w in wedges)
            out += num / den
            if derivative:
                ydnum = sum(l * y**l * w for l, w in wedges)
                yd = ydnum / den + num * th * nn * y**nn / den**2
                d_out -= np.multiply.outer(ax, yd)
        else:
            for l, w in wedges:
                out += y**l * w
                if derivative:
                    d_out -= np.multiply.outer(ax * l, y**l * w)
    if derivative:
        return out, d_out, float(margin)
    return out, float(margin)


def eval_r(an: TripleAnalysis, lam, eps_pole: float = EPS_POLE, drop_cayley: bool = False) -> RMatrixValue:
    coeffs, margin = r_coefficients(an, lam, eps_pole, drop_cayley)
    return RMatrixValue(np.atleast_1d(np.asarray(lam, dtype=complex)), TensorElement(an.alg, coeffs), margin)


def expand_r_series(an: TripleAnalysis, order: int) -> list[RSeriesTerm]:
    """Expansion of ``r_T`` in ``e^{-(beta, lambda)}``; the L-th term of root a sits at beta = L a.

    ``order`` bounds the power L.  The ``beta = 0`` term is the constant part.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    alg = an.alg
    const = cartan_part_exact(an)
    for r in alg.roots.positive_roots:
        const[alg.f_index[r], alg.e_index[r]] -= 1
    terms = [RSeriesTerm((0,) * alg.rank, const)]
    for r in alg.roots.positive_roots:
        imgs = an.b_images.get(r, [])
        if not imgs:
            continue
        e_idx = alg.e_index[r]
        nn = an.n_table.get(r)
        for big_l in range(1, order + 1):
            if nn is None:
                if big_l > len(imgs):
                    break
                fvec = imgs[big_l - 1][1].coeffs
            else:
                # B^L f = theta^q B^s f with L = qN + s, 1 <= s <= N
                q, s = divmod(big_l - 1, nn)
                theta = an.theta_table[r]
                th = Fraction(int(round(theta.real))) if abs(theta.imag) < 1e-14 and abs(abs(theta.real) - 1) < 1e-14 else theta
                fvec = imgs[s][1].coeffs * (th ** q)
            w = np.array([[Fraction(0)] * alg.dim for _ in range(alg.dim)], dtype=object)
            w[e_idx, :] += fvec
            w[:, e_idx] -= fvec
            terms.append(RSeriesTerm(tuple(big_l * c for c in r), w))
    return terms


def sum_series(an: TripleAnalysis, terms: list[RSeriesTerm], lam) -> np.ndarray:
    alg = an.alg
    lam_h = an.lambda_to_h(lam)
    out = np.zeros((alg.dim, alg.dim), dtype=complex)
    for t in terms:
        out += np.exp(-alg.pair(t.beta, lam_h)) * t.tensor.astype(complex)
    return out


# ------------------------------------------------------------------ CDYBE
def bracket_terms(alg, rr: np.ndarray, r13: np.ndarray | None = None, r23: np.ndarray | None = None) -> np.ndarray:
    """``[r12, r13] + [r13, r23] + [r12, r23]`` as a dense order-3 array.

    ``r13`` and ``r23`` default to ``rr`` (spectral versions pass three different tensors).
    """
    c = alg.structure
    r12 = rr
    r13 = rr if r13 is None else r13
    r23 = rr if r23 is None else r23
    t = np.einsum("ack,ab,cd->kbd", c, r12, r13, optimize=True)
    t = t + np.einsum("bdk,ab,cd->ack", c, r13, r23, optimize=True)
    t = t + np.einsum("bck,ab,cd->akd", c, r12, r23, optimize=True)
    return t


def derivative_terms(an: TripleAnalysis, d_r: np.ndarray) -> np.ndarray:
    alg = an.alg
    out = np.zeros((alg.dim,) * 3, dtype=complex)
    for i, x in enumerate(an.I1):
        v = alg.cartan_vector(x)
        out += np.einsum("a,bc->abc", v, d_r[i])
        out -= np.einsum("b,ac->abc", v, d_r[i])
        out += np.einsum("c,ab->abc", v, d_r[i])
    return out


def fd_derivative(an: TripleAnalysis, lam, step: float = 1e-5, drop_cayley: bool = False) -> np.ndarray:
    """Central differences with one Richardson step, along each I1 direction."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    alg = an.alg
    out = np.zeros((an.l_dim, alg.dim, alg.dim), dtype=complex)

    def r_at(p):
        return r_coefficients(an, p, drop_cayley=drop_cayley)[0]

    for i in range(an.l_dim):
        e = np.zeros(an.l_dim)
        e[i] = 1.0
        d1 = (r_at(lam + step * e) - r_at(lam - step * e)) / (2 * step)
        h2 = step / 2
        d2 = (r_at(lam + h2 * e) - r_at(lam - h2 * e)) / (2 * h2)
        out[i] = (4 * d2 - d1) / 3
    return out


def cdybe_residual(an: TripleAnalysis, lam, method: str = "analytic", drop_cayley: bool = False,
                   fd_tol: float = 1e-4) -> CdybeReport:
    """Left-hand side of the CDYBE at ``lam``.  ``method``: analytic, fd, or both."""
    if method not in ("analytic", "fd", "both"):
        raise ValueError(f"unknown derivative method {method!r}")
    rr, d_an, _ = r_coefficients(an, lam, drop_cayley=drop_cayley, derivative=True)
    gap = None
    if method in ("fd", "both"):
        d_fd = fd_derivative(an, lam, drop_cayley=drop_cayley)
        gap = float(np.max(np.abs(d_fd - d_an), initial=0.0))
        if method == "both" and gap > fd_tol:
            raise MethodDisagreement(f"analytic and finite-difference derivatives differ by {gap:.3e}")
        d_use = d_fd if method == "fd" else d_an
    else:
        d_use = d_an
    res = bracket_terms(an.alg, rr) + derivative_terms(an, d_use)
    return CdybeReport(res, float(np.max(np.abs(res))), method, np.atleast_1d(np.asarray(lam, dtype=complex)), gap)


# ------------------------------------------------------------- structure
def symmetric_defect(an: TripleAnalysis, rr: np.ndarray) -> float:
    """``max |r + r^21 + Omega|``."""
    from .liealg import omega_exact

    omega = np.array(omega_exact(an.alg).coeffs, dtype=float)
    return float(np.max(np.abs(rr + rr.T + omega)))


def l_invariance_defect(an: TripleAnalysis, rr: np.ndarray) -> float:
    """``max_x |[x (x) 1 + 1 (x) x, r]|`` over the I1 basis."""
    alg = an.alg
    worst = 0.0
    for x in an.I1:
        ad = alg.ad_matrix(alg.cartan_vector(x))
        act = ad @ rr + rr @ ad.T
        worst = max(worst, float(np.max(np.abs(act))))
    return worst


def felder_r(alg, lam_h) -> np.ndarray:
    """Independent closed form for T = id: ``-Omega/2 + sum coth((a,l)/2)/2 e ^ f``."""
    from .liealg import omega_exact

    out = -np.array(omega_exact(alg).coeffs, dtype=float).astype(complex) / 2
    for r in alg.roots.positive_roots:
        c = 0.5 / np.tanh(alg.pair(r, lam_h) / 2)
        i, j = alg.e_index[r], alg.f_index[r]
        out[i, j] += c
        out[j, i] -= c
    return out


def sample_lambda(an: TripleAnalysis, rng: np.random.Generator, lo: float = 0.3, hi: float = 3.0,
                  imag: float = 0.5, tries: int = 2000) -> np.ndarray:
    """Random lambda (I1 coordinates) with ``Re (a_i, lambda)`` in ``[lo, hi]``."""
    alg = an.alg
    if an.l_dim == 0:
        return np.zeros(0, dtype=complex)
    p = an.l_projector()
    g = alg.h_gram_float

    def coweights(vals):
        # h with <a_i, h> = vals_i
        return np.linalg.solve(alg.a_float.T, vals)

    rho_v = an.lambda_to_h(np.zeros(an.l_dim)) + p @ coweights(np.ones(alg.rank))
    for _ in range(tries):
        cand = p @ coweights(rng.uniform(lo, hi, alg.rank))
        vals = alg.a_float.T @ cand
        if np.all(vals >= lo) and np.all(vals <= hi):
            break
    else:
        cand = rho_v * rng.uniform(lo, hi) / max(1.0, float(np.max(alg.a_float.T @ rho_v)))
    im = p @ coweights(rng.uniform(-imag, imag, alg.rank))
    h = cand + 1j * im
    return np.array([x @ g @ h for x in an.I1])
