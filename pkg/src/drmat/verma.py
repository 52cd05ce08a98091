"""Truncated Verma modules, intertwiners, twisted traces and the trace identities.

Weights are complex vectors over the simple roots.  A PBW monomial is an
exponent tuple over an ordered list of positive roots and stands for
``f_{a_1}^{k_1} f_{a_2}^{k_2} ... v``.  Heights are root-lattice heights.
The twist ``B`` preserves height; along a chain of intertwiners the depth can
rise by at most ``ht(nu_k - w)`` per step, so intermediate modules carry a
buffer (see ``chain_heights``) and the truncated traces are exact up to ``H``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import _exact as ex
from .errors import (
    CapExceeded,
    NuNotPerp,
    ShapovalovSingular,
    TruncationTooSmall,
    WeightConstraintViolated,
)
from .liealg import LieAlgebraData, Root
from .reps import build_highest_weight_module
from .triple import TripleAnalysis

MAX_HEIGHT = 8
Mono = tuple[int, ...]


# ---------------------------------------------------------------- U(n_-)
class NegativeNilpotent:
    """PBW straightening in ``U(n_-)`` for a chosen order of the positive roots."""

    def __init__(self, alg: LieAlgebraData, order: Sequence[Root] | None = None):
        self.alg = alg
        self.order: tuple[Root, ...] = tuple(order) if order is not None else alg.roots.positive_roots
        if sorted(self.order) != sorted(alg.roots.positive_roots):
            raise ValueError("PBW order must list every positive root once")
        self.pos = {r: p for p, r in enumerate(self.order)}
        self.f_of_pos = [alg.f_index[r] for r in self.order]
        self.pos_of_f = {k: p for p, k in enumerate(self.f_of_pos)}
        self.heights = [sum(r) for r in self.order]
        self.unit: Mono = (0,) * len(self.order)
        self._mul = lru_cache(maxsize=None)(self._mul_impl)

    def depth(self, m: Mono) -> Root:
        n = self.alg.rank
        out = [0] * n
        for p, k in enumerate(m):
            if k:
                r = self.order[p]
                for i in range(n):
                    out[i] += k * r[i]
        return tuple(out)

    def height(self, m: Mono) -> int:
        return sum(k * h for k, h in zip(m, self.heights))

    @staticmethod
    def first(m: Mono) -> int:
        for p, k in enumerate(m):
            if k:
                return p
        return -1

    @staticmethod
    def bump(m: Mono, p: int, by: int) -> Mono:
        lst = list(m)
        lst[p] += by
        return tuple(lst)

    def mul_f(self, p: int, m: Mono) -> dict[Mono, Fraction]:
        """``f_{order[p]} * m`` straightened (exact)."""
        return self._mul(p, m)

    def _mul_impl(self, p: int, m: Mono) -> dict[Mono, Fraction]:
        q = self.first(m)
        if q == -1 or p <= q:
            return {self.bump(m, p, 1): Fraction(1)}
        rest = self.bump(m, q, -1)
        out: dict[Mono, Fraction] = {}
        # f_p f_q rest = f_q (f_p rest) + [f_p, f_q] rest
        for m2, c2 in self.mul_f(p, rest).items():
            for m3, c3 in self.mul_f(q, m2).items():
                _acc(out, m3, c2 * c3)
        for k, c in self.alg.bracket_basis(self.f_of_pos[p], self.f_of_pos[q]).items():
            for m3, c3 in self.mul_f(self.pos_of_f[k], rest).items():
                _acc(out, m3, c * c3)
        return {k: v for k, v in out.items() if v}

    def mul_element(self, coeffs: dict[int, Fraction], m: Mono) -> dict[Mono, Fraction]:
        """``(sum_k c_k x_k) * m`` for a combination of f's."""
        out: dict[Mono, Fraction] = {}
        for k, c in coeffs.items():
            for m2, c2 in self.mul_f(self.pos_of_f[k], m).items():
                _acc(out, m2, c * c2)
        return out

    def monomials(self, max_height: int) -> list[Mono]:
        """All PBW monomials of height <= max_height, sorted by height."""
        out: list[Mono] = []
        npos = len(self.order)

        def rec(p, cur, h):
            if p == npos:
                out.append(tuple(cur))
                return
            k = 0
            while h + k * self.heights[p] <= max_height:
                cur.append(k)
                rec(p + 1, cur, h + k * self.heights[p])
                cur.pop()
                k += 1

        rec(0, [], 0)
        out.sort(key=lambda m: (self.height(m), m))
        return out


def _acc(d: dict, k, v) -> None:
    if v:
        s = d.get(k, 0) + v
        if s:
            d[k] = s
        else:
            d.pop(k, None)


def kostant_count(alg: LieAlgebraData, beta: Root) -> int:
    """Number of ways to write ``beta`` as a sum of positive roots."""
    roots = alg.roots.positive_roots

    @lru_cache(maxsize=None)
    def count(b: Root, start: int) -> int:
        if not any(b):
            return 1
        total = 0
        for p in range(start, len(roots)):
            r = roots[p]
            nb = tuple(x - y for x, y in zip(b, r))
            if min(nb) >= 0:
                total += count(nb, p)
        return total

    return count(tuple(beta), 0)


# ---------------------------------------------------------------- modules
class VermaModule:
    """``M_mu`` truncated at height ``H``; actions are memoized per basis element."""

    def __init__(self, nil: NegativeNilpotent, mu, H: int, cap: int | None = MAX_HEIGHT):
        if cap is not None and H > cap:
            raise CapExceeded(f"height {H} exceeds the cap {MAX_HEIGHT}")
        self.nil = nil
        self.alg = nil.alg
        self.mu = np.asarray(mu, dtype=complex)
        self.H = int(H)
        self.monos = nil.monomials(self.H)
        self.by_depth: dict[Root, list[Mono]] = {}
        for m in self.monos:
            self.by_depth.setdefault(nil.depth(m), []).append(m)
        self._act: dict[tuple[int, Mono], dict[Mono, complex]] = {}
        self._mu_h = self.alg.a_float @ self.mu  # <mu, h_i>

    def weight(self, m: Mono) -> np.ndarray:
        return self.mu - np.array(self.nil.depth(m))

    def h_value(self, i: int, m: Mono) -> complex:
        d = self.nil.depth(m)
        return complex(self._mu_h[i] - sum(self.alg.a[i][k] * d[k] for k in range(self.alg.rank)))

    def basis(self, beta: Root) -> list[Mono]:
        return self.by_depth.get(tuple(beta), [])

    def act(self, k: int, m: Mono) -> dict[Mono, complex]:
        """Basis element ``x_k`` applied to the monomial ``m``, no truncation."""
        key = (k, m)
        hit = self._act.get(key)
        if hit is not None:
            return hit
        alg, nil = self.alg, self.nil
        out: dict[Mono, complex] = {}
        if k in nil.pos_of_f:
            out = {mm: complex(c) for mm, c in nil.mul_f(nil.pos_of_f[k], m).items()}
        elif k >= alg.n_pos:  # Cartan
            i = k - alg.n_pos
            out = {m: self.h_value(i, m)}
        else:
            q = nil.first(m)
            if q != -1:
                rest = nil.bump(m, q, -1)
                for j, c in alg.bracket_basis(k, nil.f_of_pos[q]).items():
                    for mm, cc in self.act(j, rest).items():
                        _acc(out, mm, complex(c) * cc)
                for m2, c2 in self.act(k, rest).items():
                    for m3, c3 in nil.mul_f(q, m2).items():
                        _acc(out, m3, c2 * complex(c3))
        self._act[key] = out
        return out

    def act_vector(self, k: int, vec: dict[Mono, complex]) -> dict[Mono, complex]:
        out: dict[Mono, complex] = {}
        for m, c in vec.items():
            for mm, cc in self.act(k, m).items():
                _acc(out, mm, c * cc)
        return out

    def raising_matrix(self, beta: Root) -> np.ndarray:
        """Rows: (i, m') with m' of depth beta - alpha_i; columns: monomials of depth beta."""
        alg = self.alg
        cols = self.basis(beta)
        rows = []
        for i in range(alg.rank):
            lower = tuple(b - int(j == i) for j, b in enumerate(beta))
            if min(lower) < 0:
                continue
            for mp in self.basis(lower):
                rows.append((i, mp))
        mat = np.zeros((len(rows), len(cols)), dtype=complex)
        for c, m in enumerate(cols):
            for i in range(alg.rank):
                for mm, val in self.act(alg.e_index[alg.simple_root(i)], m).items():
                    try:
                        r = rows.index((i, mm))
                    except ValueError:
                        continue
                    mat[r, c] += val
        return mat

    def casimir_defect(self, rho_weight: np.ndarray | None = None) -> float:
        """max |C v - (mu, mu + 2 rho) v| over all basis monomials."""
        alg = self.alg
        rho = alg.rho_weight_float if rho_weight is None else rho_weight
        target = alg.inner(self.mu, self.mu + 2 * rho)
        worst = 0.0
        for m in self.monos:
            w = self.weight(m)
            out: dict[Mono, complex] = {m: alg.inner(w, w) + 2 * alg.inner(rho, w)}
            for r in alg.roots.positive_roots:
                ev = self.act(alg.e_index[r], m)
                _merge(out, self.act_vector(alg.f_index[r], ev), 2.0)
            out[m] = out.get(m, 0) - target
            worst = max(worst, max((abs(v) for v in out.values()), default=0.0))
        return worst


def _merge(dst: dict, src: dict, scale=1.0) -> None:
    for k, v in src.items():
        _acc(dst, k, scale * v)


def build_truncated_verma(alg: LieAlgebraData, mu, H: int, order=None) -> VermaModule:
    return VermaModule(NegativeNilpotent(alg, order), mu, H)


@dataclass
class FiniteModule:
    """Finite-dimensional module by the matrices of every basis element of g."""

    alg: LieAlgebraData
    mats: np.ndarray  # (dim g, dim V, dim V)
    weights: list[Root]
    name: str = "module"

    @property
    def dim(self) -> int:
        return self.mats.shape[1]

    def weight_indices(self, weight) -> list[int]:
        w = tuple(Fraction(x) for x in weight)
        return [k for k, wt in enumerate(self.weights) if wt == w]

    def max_height(self) -> int:
        return max(sum(w) for w in self.weights)

    def cartan_action(self, hvec) -> np.ndarray:
        """Matrix of the Cartan element ``hvec`` (coroot coordinates)."""
        n = self.alg.n_pos
        return np.tensordot(np.asarray(hvec, dtype=complex), self.mats[n : n + self.alg.rank], axes=1)

    def homomorphism_defect(self) -> float:
        c = self.alg.structure
        m = self.mats
        comm = np.einsum("aij,bjk->abik", m, m) - np.einsum("bij,ajk->abik", m, m)
        img = np.einsum("abk,kij->abij", c, m)
        return float(np.max(np.abs(comm - img)))


def adjoint_module(alg: LieAlgebraData) -> FiniteModule:
    mats = np.transpose(alg.structure, (0, 2, 1)).astype(complex)
    return FiniteModule(alg, mats, list(alg.weights), "adjoint")


def trivial_module(alg: LieAlgebraData) -> FiniteModule:
    return FiniteModule(alg, np.zeros((alg.dim, 1, 1), dtype=complex), [(0,) * alg.rank], "trivial")


def irreducible_module(alg: LieAlgebraData, labels: Sequence[int]) -> FiniteModule:
    """Finite-dimensional irreducible module with the given Dynkin labels."""
    mod = build_highest_weight_module(alg.a, labels)
    n = alg.rank
    # highest weight in simple-root coordinates: <lam, h_i> = labels_i
    at = [[Fraction(alg.a[j][i]) for j in range(n)] for i in range(n)]
    lam = ex.solve(at, [Fraction(x) for x in labels])
    weights = [tuple(lam[k] - beta[k] for k in range(n)) for beta, _ in mod.basis]
    mats: dict[int, np.ndarray] = {}
    for i in range(n):
        # the algebra's simple f is d_i times the Chevalley generator
        mats[alg.e_index[alg.simple_root(i)]] = mod.e[i].to_dense(complex)
        mats[alg.f_index[alg.simple_root(i)]] = float(alg.d[i]) * mod.f[i].to_dense(complex)
        mats[alg.h_index[i]] = mod.h[i].to_dense(complex)
    for r in alg.roots.positive_roots:
        if sum(r) == 1:
            continue
        i, rest = alg.root_word[r]
        s = alg.simple_root(i)
        ce = alg.bracket_basis(alg.e_index[s], alg.e_index[rest])[alg.e_index[r]]
        cf = alg.bracket_basis(alg.f_index[rest], alg.f_index[s])[alg.f_index[r]]
        e1, e2 = mats[alg.e_index[s]], mats[alg.e_index[rest]]
        f1, f2 = mats[alg.f_index[rest]], mats[alg.f_index[s]]
        mats[alg.e_index[r]] = (e1 @ e2 - e2 @ e1) / float(ce)
        mats[alg.f_index[r]] = (f1 @ f2 - f2 @ f1) / float(cf)
    arr = np.array([mats[k] for k in range(alg.dim)])
    return FiniteModule(alg, arr, weights, f"L{list(labels)}")


def module_from_name(alg: LieAlgebraData, name: str) -> FiniteModule:
    if name == "adjoint":
        return adjoint_module(alg)
    if name == "trivial":
        return trivial_module(alg)
    if name.startswith("L"):
        return irreducible_module(alg, [int(x) for x in name[1:].strip("[]()").split(",")])
    raise ValueError(f"unknown module {name!r}")


# ---------------------------------------------------------------- intertwiners
@dataclass
class IntertwinerData:
    """``Phi^v_lambda : M_lambda -> M_mu (x) V`` with ``lambda = mu + wt(v)``."""

    target: VermaModule
    V: FiniteModule
    v: np.ndarray
    nu: Root
    singular: dict[Mono, np.ndarray]  # Phi(v_lambda) = sum m v_mu (x) singular[m]
    _phi: dict[Mono, dict[Mono, np.ndarray]] = field(default_factory=dict, repr=False)

    @property
    def mu(self) -> np.ndarray:
        return self.target.mu

    @property
    def lam(self) -> np.ndarray:
        return self.target.mu + np.array(self.nu)

    def phi(self, m: Mono) -> dict[Mono, np.ndarray]:
        """``Phi(m v_lambda)``, truncated at the target height."""
        hit = self._phi.get(m)
        if hit is not None:
            return hit
        nil = self.target.nil
        q = nil.first(m)
        if q == -1:
            out = dict(self.singular)
        else:
            rest = nil.bump(m, q, -1)
            fk = nil.f_of_pos[q]
            fv = self.V.mats[fk]
            out = {}
            H = self.target.H
            for mm, w in self.phi(rest).items():
                for m2, c in nil.mul_f(q, mm).items():
                    if nil.height(m2) <= H:
                        _acc_vec(out, m2, complex(c) * w)
                _acc_vec(out, mm, fv @ w)
        self._phi[m] = out
        return out

    def raising_defect(self) -> float:
        """max |e_i Phi(v_lambda)| over all components inside the truncation."""
        alg = self.target.alg
        worst = 0.0
        for i in range(alg.rank):
            ek = alg.e_index[alg.simple_root(i)]
            out: dict[Mono, np.ndarray] = {}
            for m, w in self.singular.items():
                for mm, c in self.target.act(ek, m).items():
                    _acc_vec(out, mm, c * w)
                _acc_vec(out, m, self.V.mats[ek] @ w)
            for m, w in out.items():
                if self.target.nil.height(m) < self.target.H:
                    worst = max(worst, float(np.max(np.abs(w))))
        return worst


def _acc_vec(d: dict, k, v: np.ndarray) -> None:
    if k in d:
        d[k] = d[k] + v
    else:
        d[k] = np.array(v, copy=True)


def build_intertwiner(target: VermaModule, V: FiniteModule, v, nu: Root, sing_tol: float = 1e-10) -> IntertwinerData:
    """Solve for ``Phi(v_lambda)`` degree by degree from ``e_i Phi(v_lambda) = 0``."""
    alg = target.alg
    v = np.asarray(v, dtype=complex)
    nu = tuple(Fraction(x) for x in nu)
    allowed = set(V.weight_indices(nu))
    if np.any(np.abs(np.delete(v, sorted(allowed))) > 0):
        raise ValueError("v is not a weight vector of the declared weight")
    singular: dict[Mono, np.ndarray] = {target.nil.unit: v}
    depths = sorted({target.nil.depth(m) for m in target.monos if any(target.nil.depth(m))}, key=lambda b: (sum(b), b))
    for beta in depths:
        wt = tuple(a + b for a, b in zip(nu, beta))
        vidx = V.weight_indices(wt)
        if not vidx:
            continue
        cols = target.basis(beta)
        smat = target.raising_matrix(beta)
        # known part: sum over m' of depth beta - alpha_i of m' (x) e_i w_{m'}, restricted to V[wt]
        rows = []
        for i in range(alg.rank):
            lower = tuple(b - int(j == i) for j, b in enumerate(beta))
            if min(lower) < 0:
                continue
            for mp in target.basis(lower):
                rows.append((i, mp))
        known = np.zeros((len(rows), len(vidx)), dtype=complex)
        for r, (i, mp) in enumerate(rows):
            w = singular.get(mp)
            if w is not None:
                ek = alg.e_index[alg.simple_root(i)]
                known[r] = (V.mats[ek] @ w)[vidx]
        if smat.shape[0] < smat.shape[1]:
            raise ShapovalovSingular(f"underdetermined singular-vector system at depth {beta}", degree=beta)
        sv = np.linalg.svd(smat, compute_uv=False)
        if sv.size and sv[-1] <= sing_tol * max(1.0, sv[0]):
            raise ShapovalovSingular(f"Shapovalov form degenerate at depth {beta}", degree=beta)
        sol, *_ = np.linalg.lstsq(smat, -known, rcond=None)
        resid = np.max(np.abs(smat @ sol + known), initial=0.0)
        if resid > 1e-8 * max(1.0, float(np.max(np.abs(known), initial=0.0))):
            raise ShapovalovSingular(f"singular-vector system inconsistent at depth {beta}", degree=beta)
        for c, m in enumerate(cols):
            w = np.zeros(V.dim, dtype=complex)
            w[vidx] = sol[c]
            if np.any(w):
                singular[m] = w
    return IntertwinerData(target, V, v, nu, singular)


# ---------------------------------------------------------------- twist
class VermaTwist:
    """``B : M_{mu'} -> M_mu``, ``B(x v_{mu'}) = B(x) v_mu`` on PBW monomials (exact)."""

    def __init__(self, an: TripleAnalysis, nil: NegativeNilpotent):
        self.an = an
        self.nil = nil
        self._img: dict[Mono, dict[Mono, Fraction]] = {}
        self.f_images = {}
        for p, k in enumerate(nil.f_of_pos):
            img = an.bmap.forward[k]
            self.f_images[p] = {j: img.coeffs[j] for j in img.support()}

    def apply(self, m: Mono) -> dict[Mono, Fraction]:
        hit = self._img.get(m)
        if hit is not None:
            return hit
        nil = self.nil
        q = nil.first(m)
        if q == -1:
            out = {m: Fraction(1)}
        else:
            rest = nil.bump(m, q, -1)
            out = {}
            for m2, c2 in self.apply(rest).items():
                for m3, c3 in nil.mul_element(self.f_images[q], m2).items():
                    _acc(out, m3, c2 * c3)
        self._img[m] = out
        return out


def twist_on_verma(an: TripleAnalysis, source: VermaModule, target: VermaModule, tol: float = 1e-10) -> VermaTwist:
    if source.nil is not target.nil:
        raise ValueError("source and target must share a PBW order")
    check_twist_weights(an, source.mu, target.mu, tol)
    return VermaTwist(an, source.nil)


def check_twist_weights(an: TripleAnalysis, mu_src, mu_tgt, tol: float = 1e-10) -> float:
    """Residual of ``(mu', alpha) = (mu, T alpha)`` over gamma1."""
    alg = an.alg
    worst = 0.0
    for i, j in an.spec.t_map:
        worst = max(worst, abs(alg.inner(mu_src, alg.simple_root(i)) - alg.inner(mu_tgt, alg.simple_root(j))))
    if worst > tol:
        raise WeightConstraintViolated(f"twist weight constraint residual {worst:.3e}")
    return worst


def twist_relation_defect(an: TripleAnalysis, twist: VermaTwist, source: VermaModule, target: VermaModule) -> float:
    """Check ``B x = B(x) B`` on n_- + h_1 and ``x B = B B^{-1}(x)`` on n_+ + h_2."""
    alg = an.alg
    H = source.H
    worst = 0.0

    def b_vec(vec):
        out: dict[Mono, complex] = {}
        for m, c in vec.items():
            for mm, cc in twist.apply(m).items():
                _acc(out, mm, c * complex(cc))
        return out

    def act_comb(module, comb, vec):
        out: dict[Mono, complex] = {}
        for k, c in comb.items():
            _merge(out, module.act_vector(k, vec), complex(c))
        return out

    def gap(a, b):
        keys = set(a) | set(b)
        return max((abs(a.get(k, 0) - b.get(k, 0)) for k in keys), default=0.0)

    fwd, bwd = an.bmap.forward, an.bmap.backward
    for m in source.monos:
        if source.nil.height(m) >= H:
            continue
        base = {m: 1.0}
        for k, img_el in fwd.items():
            if img_el is None:
                continue
            img = {j: img_el.coeffs[j] for j in img_el.support()}
            worst = max(worst, gap(b_vec(source.act_vector(k, base)), act_comb(target, img, b_vec(base))))
        for k, img_el in bwd.items():
            if img_el is None:
                continue
            img = {j: img_el.coeffs[j] for j in img_el.support()}
            worst = max(worst, gap(target.act_vector(k, b_vec(base)), b_vec(act_comb(source, img, base))))
    return worst


# ---------------------------------------------------------------- weights
@dataclass
class WeightConstraintSolution:
    nu: np.ndarray
    xi: np.ndarray  # I1 coordinates
    mu: np.ndarray  # simple-root coordinates
    mu_prime: np.ndarray
    residual: float


def solve_weight_constraint(an: TripleAnalysis, nu, xi, tol: float = 1e-12) -> WeightConstraintSolution:
    """``mu = (1 + C_T)/2 nu + xi`` so that ``(mu - nu, alpha) = (mu, T alpha)`` on gamma1."""
    alg = an.alg
    nu = np.asarray(nu, dtype=complex)
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    nu_h = alg.sharp(nu)
    if np.max(np.abs(an.l_projector() @ nu_h), initial=0.0) > tol * max(1.0, float(np.max(np.abs(nu_h), initial=0.0))):
        raise NuNotPerp("total weight nu must be orthogonal to l")
    mu_h = (nu_h + an.cayley_h @ nu_h) / 2 + an.lambda_to_h(xi)
    mu = alg.flat(mu_h)
    mu_prime = mu - nu
    res = 0.0
    for i, j in an.spec.t_map:
        res = max(res, abs(alg.inner(mu_prime, alg.simple_root(i)) - alg.inner(mu, alg.simple_root(j))))
    if res > 1e-10:
        raise WeightConstraintViolated(f"weight constraint residual {res:.3e}")
    return WeightConstraintSolution(nu, xi, mu, mu_prime, float(res))


# ---------------------------------------------------------------- series
def _class_data(an: TripleAnalysis):
    cache = getattr(an, "_class_cache", None)
    if cache is None:
        alg = an.alg
        n = alg.rank
        # exact pairings <alpha_i, l_k>
        lmat = [[sum((Fraction(alg.a[j][i]) * l[j] for j in range(n)), Fraction(0)) for i in range(n)] for l in an.l_basis]
        cache = {"lmat": lmat}
        an._class_cache = cache  # type: ignore[attr-defined]
    return cache


def class_key(an: TripleAnalysis, beta: Sequence[int]) -> tuple:
    """Exact label of ``beta`` modulo l-perp: its height and pairings with the l basis."""
    lmat = _class_data(an)["lmat"]
    return (int(sum(beta)),) + tuple(sum((row[i] * beta[i] for i in range(len(beta))), Fraction(0)) for row in lmat)


@dataclass
class LatticeSeries:
    """``exp((prefactor, lambda)) * sum_beta c_beta exp(-(beta, lambda))``, truncated at height H.

    Terms are keyed by the l-class of beta (functions of lambda in l* only see that class);
    ``reps`` stores one lattice representative per class.
    """

    an: TripleAnalysis
    prefactor: np.ndarray
    H: int
    terms: dict = field(default_factory=dict)
    reps: dict = field(default_factory=dict)

    def add(self, beta, coeff) -> None:
        beta = tuple(int(x) for x in beta)
        if sum(beta) > self.H:
            return
        k = class_key(self.an, beta)
        if k in self.terms:
            self.terms[k] = self.terms[k] + coeff
        else:
            self.terms[k] = np.array(coeff, dtype=complex, copy=True)
            self.reps[k] = beta

    def items(self):
        for k, c in self.terms.items():
            yield k, self.reps[k], c

    def coefficient(self, beta):
        k = class_key(self.an, tuple(beta))
        return self.terms.get(k)

    def convolve(self, other: "LatticeSeries", combine: Callable | None = None, H: int | None = None) -> "LatticeSeries":
        combine = combine or (lambda a, b: np.multiply.outer(a, b) if np.ndim(a) and np.ndim(b) else a * b)
        out = LatticeSeries(self.an, self.prefactor + other.prefactor, min(self.H, other.H) if H is None else H)
        for _, b1, c1 in self.items():
            for _, b2, c2 in other.items():
                if sum(b1) + sum(b2) <= out.H:
                    out.add(tuple(x + y for x, y in zip(b1, b2)), combine(c1, c2))
        return out

    def by_height(self) -> dict[int, float]:
        out: dict[int, float] = {h: 0.0 for h in range(self.H + 1)}
        for k, c in self.terms.items():
            out[k[0]] = max(out[k[0]], float(np.max(np.abs(c), initial=0.0)))
        return out

    def evaluate(self, lam) -> np.ndarray:
        alg = self.an.alg
        lam_h = self.an.lambda_to_h(lam)
        total = 0
        for _, b, c in self.items():
            total = total + np.exp(alg.pair(self.prefactor - np.array(b), lam_h)) * c
        return total


def root_orbits(an: TripleAnalysis) -> list[tuple[Root, ...]]:
    """T-orbits of the roots in <Gamma3>."""
    seen: set[Root] = set()
    out = []
    for r in an.alg.roots.positive_roots:
        if r not in an.n_table or r in seen:
            continue
        orbit = [r]
        cur = an.t_root(r)
        while cur != r:
            orbit.append(cur)
            cur = an.t_root(cur)
        seen.update(orbit)
        out.append(tuple(orbit))
    return out


def delta_b_product(an: TripleAnalysis, H: int) -> LatticeSeries:
    """``e^{(rho, lambda)} prod_orbits (1 - theta e^{-N (alpha, lambda)})`` as a series."""
    alg = an.alg
    zero = (0,) * alg.rank
    out = LatticeSeries(an, alg.rho_weight_float.astype(complex), H)
    out.add(zero, 1.0)
    for orbit in root_orbits(an):
        osum = tuple(sum(r[k] for r in orbit) for k in range(alg.rank))
        factor = LatticeSeries(an, np.zeros(alg.rank, dtype=complex), H)
        factor.add(zero, 1.0)
        factor.add(osum, -an.theta_table[orbit[0]])
        out = out.convolve(factor)
    return out


def delta_b_closed(an: TripleAnalysis, lam) -> complex:
    """Closed product value of the twisted Weyl denominator at ``lam``."""
    alg = an.alg
    val = np.exp(an.root_pairing(alg.rho_weight_float, lam))
    for orbit in root_orbits(an):
        n_a = an.n_table[orbit[0]]
        val *= 1 - an.theta_table[orbit[0]] * np.exp(-n_a * an.root_pairing(orbit[0], lam))
    return complex(val)


def delta_b_trace(an: TripleAnalysis, H: int, order=None) -> LatticeSeries:
    """``Tr|M_{-rho}(B e^lambda)`` computed on the truncated Verma module."""
    alg = an.alg
    nil = NegativeNilpotent(alg, order)
    twist = VermaTwist(an, nil)
    out = LatticeSeries(an, -alg.rho_weight_float.astype(complex), H)
    for m in nil.monomials(H):
        c = twist.apply(m).get(m, 0)
        out.add(nil.depth(m), complex(c))
    return out


def delta_b(an: TripleAnalysis, H: int = 6, mode: str = "product") -> LatticeSeries:
    if mode == "product":
        return delta_b_product(an, H)
    if mode == "trace":
        return delta_b_trace(an, H)
    raise ValueError(f"unknown delta_B mode {mode!r}")


def reciprocity_defect(an: TripleAnalysis, H: int) -> dict[int, float]:
    """``delta_B(product) * Tr|M_{-rho}(B e^lambda) - 1`` by height."""
    prod = delta_b_product(an, H).convolve(delta_b_trace(an, H))
    zero = class_key(an, (0,) * an.alg.rank)
    if zero in prod.terms:
        prod.terms[zero] = prod.terms[zero] - 1.0
    else:
        prod.add((0,) * an.alg.rank, -1.0)
    return prod.by_height()


# ---------------------------------------------------------------- traces
@dataclass
class TraceSetup:
    """Everything needed to evaluate and test a twisted trace."""

    an: TripleAnalysis
    modules: list[FiniteModule]
    vectors: list[np.ndarray]
    nus: list[Root]
    solution: WeightConstraintSolution
    H: int
    order: tuple | None = None

    @property
    def mu(self) -> np.ndarray:
        return self.solution.mu

    def mu_chain(self) -> list[np.ndarray]:
        """``[mu_0, ..., mu_r]`` with ``mu_r = mu`` and ``mu_{k-1} = mu_k - nu_k``."""
        chain = [np.asarray(self.mu, dtype=complex)]
        for nu in reversed(self.nus):
            chain.append(chain[-1] - np.array(nu, dtype=float))
        return list(reversed(chain))


def trace_function(setup: TraceSetup) -> LatticeSeries:
    """``F = Tr(Phi^{v_1} ... Phi^{v_r} B e^lambda)`` on ``M_{mu'}``, block by block."""
    an, H = setup.an, setup.H
    alg = an.alg
    nil = NegativeNilpotent(alg, setup.order)
    chain = setup.mu_chain()
    r = len(setup.modules)
    check_twist_weights(an, chain[0], chain[-1])
    if H > MAX_HEIGHT:
        raise CapExceeded(f"height {H} exceeds the cap {MAX_HEIGHT}")
    heights = chain_heights(setup)
    phis = []
    for k in range(r):
        target = VermaModule(nil, chain[k], heights[k], cap=None)
        phis.append(build_intertwiner(target, setup.modules[k], setup.vectors[k], setup.nus[k]))
    twist = VermaTwist(an, nil)
    shape = tuple(V.dim for V in setup.modules)
    out = LatticeSeries(an, chain[0].copy(), H)
    for beta_monos in _group_by_depth(nil, H):
        beta, monos = beta_monos
        total = np.zeros(shape, dtype=complex)
        for m in monos:
            state: dict[Mono, np.ndarray] = {mm: np.array(complex(c)) for mm, c in twist.apply(m).items()}
            for k in range(r - 1, -1, -1):
                nxt: dict[Mono, np.ndarray] = {}
                for mm, t in state.items():
                    for m2, w in phis[k].phi(mm).items():
                        _acc_vec(nxt, m2, np.multiply.outer(w, t))
                state = nxt
            if m in state:
                total = total + state[m]
        out.add(beta, total)
    return out


def chain_heights(setup: TraceSetup) -> list[int]:
    """Truncation height for the target of each intertwiner.

    A state in ``M_{mu_{k-1}}`` still has to pass ``Phi_{k-1}, ..., Phi_1``,
    each changing the height by ``ht(w_j) - ht(nu_j)`` for some weight ``w_j`` of ``V_j``.
    """
    out = []
    extra = 0
    for k, (V, nu) in enumerate(zip(setup.modules, setup.nus)):
        out.append(setup.H + extra)
        low = min(sum(w) for w in V.weights)
        extra += int(sum(nu) - low)
    return out


def _group_by_depth(nil: NegativeNilpotent, H: int):
    groups: dict[Root, list[Mono]] = {}
    for m in nil.monomials(H):
        groups.setdefault(nil.depth(m), []).append(m)
    return sorted(groups.items(), key=lambda kv: (sum(kv[0]), kv[0]))


def normalized_trace(setup: TraceSetup, trace: LatticeSeries | None = None) -> LatticeSeries:
    """``FF = delta_B * F``."""
    trace = trace_function(setup) if trace is None else trace
    return delta_b_product(setup.an, setup.H).convolve(trace, lambda a, b: a * b)


# ---------------------------------------------------------------- operators
def _apply1(mat: np.ndarray, c: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(c, axis, 0)
    return np.moveaxis(np.tensordot(mat, moved, axes=([1], [0])), 0, axis)


def _apply2(op4: np.ndarray, c: np.ndarray, p: int, q: int) -> np.ndarray:
    moved = np.moveaxis(c, (p, q), (0, 1))
    res = np.tensordot(op4, moved, axes=([2, 3], [0, 1]))
    return np.moveaxis(res, (0, 1), (p, q))


def _pair_operator(tensor: np.ndarray, V1: FiniteModule, V2: FiniteModule) -> np.ndarray:
    """``sum_ab t_ab rho1(x_a) (x) rho2(x_b)`` as ``op[i', j', i, j]``."""
    return np.einsum("ab,aij,bkl->ikjl", tensor, V1.mats, V2.mats, optimize=True)


def _same_slot_operator(tensor: np.ndarray, V: FiniteModule) -> np.ndarray:
    """``sum_ab t_ab rho(x_a) rho(x_b)``."""
    return np.einsum("ab,aij,bjk->ik", tensor, V.mats, V.mats, optimize=True)


def r_series_terms(an: TripleAnalysis, H: int, perturb: np.ndarray | None = None) -> list[tuple[Root, np.ndarray]]:
    from .rmatrix import expand_r_series

    out = []
    for t in expand_r_series(an, max(H, 1)):
        if sum(t.beta) <= H:
            ten = t.tensor.astype(complex)
            if perturb is not None and not any(t.beta):
                ten = ten + perturb
            out.append((t.beta, ten))
    return out


def s_series_terms(an: TripleAnalysis, H: int) -> list[tuple[Root, np.ndarray]]:
    """Series of ``S_T``: ``sum_{s>=0, v>=1} e^{-(s+v)(a,l)} (B^s f (x) B^-v e + swap)`` minus the h0 term."""
    alg = an.alg
    n0 = alg.n_pos
    terms: dict[Root, np.ndarray] = {}
    for r in alg.roots.positive_roots:
        hr = sum(r)
        fs = [alg.f(r).coeffs.astype(complex)]
        cur = alg.f(r)
        for _ in range(H // hr):
            cur = an.bmap.apply(cur, 1)
            fs.append(cur.coeffs.astype(complex))
        es = [None]
        cur = alg.e(r)
        for _ in range(H // hr):
            cur = an.bmap.apply(cur, -1)
            es.append(cur.coeffs.astype(complex))
        for s in range(len(fs)):
            for v in range(1, len(es)):
                if (s + v) * hr > H:
                    continue
                a, b = fs[s], es[v]
                if not a.any() or not b.any():
                    continue
                beta = tuple((s + v) * x for x in r)
                t = np.multiply.outer(a, b) + np.multiply.outer(b, a)
                terms[beta] = terms.get(beta, 0) + t
    zero = (0,) * alg.rank
    cart = np.zeros((alg.dim, alg.dim), dtype=complex)
    for x in an.I2:
        u = (x - an.cayley_h @ x) / 2
        vec = alg.cartan_vector(u)
        cart -= np.multiply.outer(vec, vec)
    terms[zero] = terms.get(zero, 0) + cart
    return sorted(terms.items(), key=lambda kv: (sum(kv[0]), kv[0]))


def casimir_value(alg: LieAlgebraData, kappa) -> complex:
    """``Delta_kappa = (kappa, kappa + 2 rho)``."""
    kappa = np.asarray(kappa, dtype=complex)
    return complex(alg.inner(kappa, kappa + 2 * alg.rho_weight_float))


@dataclass
class IdentityReport:
    per_height: dict[int, float]
    scale: float

    @property
    def max_residual(self) -> float:
        return max(self.per_height.values(), default=0.0)


def _check_height(series: LatticeSeries, H: int):
    if H > series.H:
        raise TruncationTooSmall(f"requested order {H} exceeds the series truncation {series.H}")


def kzb_apply(an: TripleAnalysis, series: LatticeSeries, modules: list[FiniteModule], i: int,
              r_terms: list[tuple[Root, np.ndarray]]) -> LatticeSeries:
    """``(sum_{j in I1} x_j|V_i d/dx_j + sum_{j>i} r|V_i V_j - sum_{j<i} r|V_j V_i) series``; ``i`` is 1-based."""
    alg = an.alg
    p = an.l_projector()
    slot = i - 1
    out = LatticeSeries(an, series.prefactor, series.H)
    for _, b, c in series.items():
        w = series.prefactor - np.array(b)
        h = p @ alg.sharp(w)
        out.add(b, _apply1(modules[slot].cartan_action(h), c, slot))
    ops = {}
    for j in range(len(modules)):
        if j == slot:
            continue
        first, second = (slot, j) if j > slot else (j, slot)
        sign = 1.0 if j > slot else -1.0
        for beta, ten in r_terms:
            key = (first, second, beta)
            if key not in ops:
                ops[key] = _pair_operator(ten, modules[first], modules[second])
            for _, b, c in series.items():
                if sum(b) + sum(beta) <= series.H:
                    out.add(tuple(x + y for x, y in zip(b, beta)), sign * _apply2(ops[key], c, first, second))
    return out


def kzb_residual(setup: TraceSetup, i: int, FF: LatticeSeries | None = None, perturb: np.ndarray | None = None,
                 H: int | None = None) -> IdentityReport:
    """Per-height residual of the KZB equation for slot ``i`` (1-based)."""
    an = setup.an
    FF = normalized_trace(setup) if FF is None else FF
    H = FF.H if H is None else H
    _check_height(FF, H)
    chain = setup.mu_chain()
    lhs = kzb_apply(an, FF, setup.modules, i, r_series_terms(an, H, perturb))
    shift = 0.5 * (casimir_value(an.alg, chain[i]) - casimir_value(an.alg, chain[i - 1]))
    for _, b, c in FF.items():
        lhs.add(b, -shift * c)
    scale = max(FF.by_height().values())
    return IdentityReport({h: v for h, v in lhs.by_height().items() if h <= H}, scale)


def second_order_residual(setup: TraceSetup, FF: LatticeSeries | None = None, H: int | None = None) -> IdentityReport:
    """Per-height residual of ``(sum d^2/dx_j^2 - sum_{l,n} S_T|V_l V_n) FF = (mu+rho, mu+rho) FF``."""
    an = setup.an
    alg = an.alg
    FF = normalized_trace(setup) if FF is None else FF
    H = FF.H if H is None else H
    _check_height(FF, H)
    p = an.l_projector()
    g = alg.h_gram_float
    mods = setup.modules
    rho = alg.rho_weight_float
    eig = complex(alg.inner(setup.mu + rho, setup.mu + rho))
    out = LatticeSeries(an, FF.prefactor, FF.H)
    for _, b, c in FF.items():
        ph = p @ alg.sharp(FF.prefactor - np.array(b))
        out.add(b, (ph @ g @ ph - eig) * c)
    for beta, ten in s_series_terms(an, H):
        for l in range(len(mods)):
            for n in range(len(mods)):
                if l == n:
                    op = _same_slot_operator(ten, mods[l])
                    fn = lambda c, op=op, l=l: _apply1(op, c, l)
                else:
                    op4 = _pair_operator(ten, mods[l], mods[n])
                    fn = lambda c, op4=op4, l=l, n=n: _apply2(op4, c, l, n)
                for _, b, c in FF.items():
                    if sum(b) + sum(beta) <= H:
                        out.add(tuple(x + y for x, y in zip(b, beta)), -fn(c))
    scale = max(FF.by_height().values())
    return IdentityReport({h: v for h, v in out.by_height().items() if h <= H}, scale)


def weyl_denominator_identity(an: TripleAnalysis, H: int) -> IdentityReport:
    """``sum_{j in I1} x_j d/dx_j Tr + (rho + K) Tr = 0`` on ``Tr = Tr|M_{-rho}(B e^lambda)``.

    ``K(lambda) = sum_{a in <Gamma3>} theta e^{-N(a,lambda)} / (1 - theta e^{-N(a,lambda)}) h_a``
    (the geometric sum from l = 1), with ``h_a = a^sharp``.
    """
    alg = an.alg
    tr = delta_b_trace(an, H)
    p = an.l_projector()
    rho_h = alg.rho_h_float
    out = LatticeSeries(an, tr.prefactor, H)
    for _, b, c in tr.items():
        h = p @ alg.sharp(tr.prefactor - np.array(b))
        out.add(b, (h + rho_h) * c)
    kser = LatticeSeries(an, np.zeros(alg.rank, dtype=complex), H)
    for orbit in root_orbits(an):
        osum = tuple(sum(r[k] for r in orbit) for k in range(alg.rank))
        theta = an.theta_table[orbit[0]]
        hsum = sum(alg.sharp(np.array(r, dtype=float)) for r in orbit)
        m = 1
        while m * sum(osum) <= H:
            kser.add(tuple(m * x for x in osum), theta**m * hsum)
            m += 1
    for _, b, c in tr.convolve(kser, lambda a, v: a * v).items():
        out.add(b, c)
    return IdentityReport(out.by_height(), max(tr.by_height().values()))


def kzb_commutator_residual(an: TripleAnalysis, modules: list[FiniteModule], series: LatticeSeries) -> IdentityReport:
    """``K_1 K_2 - K_2 K_1`` applied to ``series`` (values in V_1 (x) V_2)."""
    terms = r_series_terms(an, series.H)
    k12 = kzb_apply(an, kzb_apply(an, series, modules, 2, terms), modules, 1, terms)
    k21 = kzb_apply(an, kzb_apply(an, series, modules, 1, terms), modules, 2, terms)
    for _, b, c in k21.items():
        k12.add(b, -c)
    return IdentityReport(k12.by_height(), max(series.by_height().values()))


def random_invariant_series(an: TripleAnalysis, modules: list[FiniteModule], H: int, rng: np.random.Generator,
                            prefactor=None) -> LatticeSeries:
    """Random series over Q_+ (height <= H) with coefficients of l-weight zero."""
    alg = an.alg
    p = an.l_projector()
    shape = tuple(V.dim for V in modules)
    # l-weight of each tensor basis index
    grids = np.meshgrid(*[np.arange(V.dim) for V in modules], indexing="ij")
    mask = np.ones(shape, dtype=bool)
    total = np.zeros(shape + (alg.rank,))
    for V, gidx in zip(modules, grids):
        w = np.array([[float(x) for x in V.weights[k]] for k in range(V.dim)])
        total += w[gidx]
    proj = np.einsum("ij,...j->...i", p, np.einsum("...j,j->...j", total, alg.d_float))
    mask = np.all(np.abs(proj) < 1e-9, axis=-1)
    pref = rng.normal(size=alg.rank) + 1j * rng.normal(size=alg.rank) if prefactor is None else prefactor
    out = LatticeSeries(an, np.asarray(pref, dtype=complex), H)
    for beta in _lattice_points(alg.rank, H):
        c = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * mask
        out.add(beta, c)
    return out


def _lattice_points(n: int, H: int):
    def rec(k, left):
        if k == n:
            yield ()
            return
        for x in range(left + 1):
            for rest in rec(k + 1, left - x):
                yield (x,) + rest

    return sorted(rec(0, H), key=lambda b: (sum(b), b))
