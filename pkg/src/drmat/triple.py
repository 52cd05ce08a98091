"""Generalized Belavin-Drinfeld triples and their derived data.

Simple-root indices are 0-based internally; the JSON document format uses
1-based node labels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Mapping

import numpy as np

from . import _exact as ex
from .errors import BadTripleFile, DegenerateTriple, NotBijective, NotIsometric, OutsideDomain
from .liealg import AlgebraElement, LieAlgebraData, Root, bracket, orthonormal_basis


@dataclass(frozen=True)
class TripleSpec:
    gamma1: tuple[int, ...]
    gamma2: tuple[int, ...]
    t_map: tuple[tuple[int, int], ...]

    @classmethod
    def make(cls, gamma1, gamma2, t_map: Mapping[int, int]) -> "TripleSpec":
        return cls(tuple(sorted(gamma1)), tuple(sorted(gamma2)), tuple(sorted(dict(t_map).items())))

    @classmethod
    def identity(cls, rank: int) -> "TripleSpec":
        nodes = range(rank)
        return cls.make(nodes, nodes, {i: i for i in nodes})

    @classmethod
    def empty(cls) -> "TripleSpec":
        return cls((), (), ())

    @classmethod
    def from_dict(cls, doc) -> "TripleSpec":
        """Parse ``{"gamma1": [...], "gamma2": [...], "map": {"i": "j"}}`` (1-based)."""
        try:
            g1 = [int(i) - 1 for i in doc["gamma1"]]
            g2 = [int(i) - 1 for i in doc["gamma2"]]
            mp = {int(k) - 1: int(v) - 1 for k, v in dict(doc["map"]).items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise BadTripleFile(f"malformed triple document: {exc}") from exc
        return cls.make(g1, g2, mp)

    @classmethod
    def from_json(cls, text: str) -> "TripleSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BadTripleFile(f"triple file is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "gamma1": [i + 1 for i in self.gamma1],
            "gamma2": [i + 1 for i in self.gamma2],
            "map": {str(i + 1): str(j + 1) for i, j in self.t_map},
        }

    @property
    def t(self) -> dict[int, int]:
        return dict(self.t_map)

    @property
    def t_inv(self) -> dict[int, int]:
        return {j: i for i, j in self.t_map}


def validate_triple(alg: LieAlgebraData, spec: TripleSpec) -> TripleSpec:
    n = alg.rank
    for i in spec.gamma1 + spec.gamma2 + tuple(x for p in spec.t_map for x in p):
        if not 0 <= i < n:
            raise NotBijective(f"node {i + 1} out of range for rank {n}")
    t = spec.t
    if len(set(spec.gamma1)) != len(spec.gamma1) or len(set(spec.gamma2)) != len(spec.gamma2):
        raise NotBijective("repeated node in gamma1 or gamma2")
    if set(t) != set(spec.gamma1):
        raise NotBijective("map domain must equal gamma1")
    if sorted(t.values()) != sorted(spec.gamma2):
        raise NotBijective("map must be a bijection onto gamma2")
    pairing = alg.cartan.pairing
    for i in spec.gamma1:
        for j in spec.gamma1:
            if pairing[i][j] != pairing[t[i]][t[j]]:
                raise NotIsometric(
                    f"(a{i + 1},a{j + 1}) = {pairing[i][j]} but (Ta{i + 1},Ta{j + 1}) = {pairing[t[i]][t[j]]}",
                    pair=(i + 1, j + 1),
                )
    return spec


def gamma3_orbits(spec: TripleSpec) -> list[tuple[int, ...]]:
    """Cycles of T contained in gamma1: nodes that return to their start."""
    t = spec.t
    seen: set[int] = set()
    cycles = []
    for start in spec.gamma1:
        if start in seen:
            continue
        path = [start]
        cur = start
        while True:
            cur = t.get(cur)
            if cur is None or cur == start or cur in path:
                break
            path.append(cur)
        if cur == start:
            cycles.append(tuple(path))
            seen.update(path)
    return cycles


class BMap:
    """The homomorphism ``B`` on ``n_- + h_1`` and ``B^{-1}`` on ``n_+ + h_2``."""

    def __init__(self, alg: LieAlgebraData, spec: TripleSpec):
        self.alg = alg
        self.spec = spec
        t, tinv = spec.t, spec.t_inv
        self.forward: dict[int, AlgebraElement | None] = {}
        self.backward: dict[int, AlgebraElement | None] = {}
        zero = AlgebraElement.zero(alg)
        for i in range(alg.rank):
            hi = alg.h_index[i]
            self.forward[hi] = alg.h(t[i]) if i in t else None
            self.backward[hi] = alg.h(tinv[i]) if i in tinv else None
        for r in alg.roots.positive_roots:
            fi, ei = alg.f_index[r], alg.e_index[r]
            if sum(r) == 1:
                k = r.index(1)
                self.forward[fi] = alg.f(alg.simple_root(t[k])) if k in t else zero
                self.backward[ei] = alg.e(alg.simple_root(tinv[k])) if k in tinv else zero
                continue
            i, rest = alg.root_word[r]
            simple = alg.simple_root(i)
            # f_r = c [f_rest, f_i]  and  e_r = d [e_i, e_rest]
            c = 1 / alg.bracket_basis(alg.f_index[rest], alg.f_index[simple])[fi]
            d = 1 / alg.bracket_basis(alg.e_index[simple], alg.e_index[rest])[ei]
            self.forward[fi] = bracket(self.forward[alg.f_index[rest]], self.forward[alg.f_index[simple]]) * c
            self.backward[ei] = bracket(self.backward[alg.e_index[simple]], self.backward[alg.e_index[rest]]) * d

    def domain(self, power: int) -> dict[int, AlgebraElement | None]:
        return self.forward if power >= 0 else self.backward

    def apply(self, x: AlgebraElement, power: int = 1) -> AlgebraElement:
        table = self.domain(power)
        out = x
        for _ in range(abs(power)):
            acc = AlgebraElement.zero(self.alg, exact=out.exact)
            for k in out.support():
                img = table.get(k)
                if img is None:
                    raise OutsideDomain(
                        f"{self.alg.labels[k]} is outside the domain of B^{'+1' if power > 0 else '-1'}"
                    )
                coeffs = img.coeffs if out.exact else img.coeffs.astype(complex)
                acc = AlgebraElement(self.alg, acc.coeffs + coeffs * out.coeffs[k])
            out = acc
        return out


def b_apply(bmap: BMap, x: AlgebraElement, power: int) -> AlgebraElement:
    return bmap.apply(x, power)


@dataclass
class TripleAnalysis:
    alg: LieAlgebraData
    spec: TripleSpec
    gamma3: tuple[int, ...]
    orbits: list[tuple[int, ...]]
    l_basis: list[list[Fraction]]
    h0_basis: list[list[Fraction]]
    I1: np.ndarray
    I2: np.ndarray
    cayley: list[list[Fraction]]  # matrix of C_T in h0_basis coordinates
    cayley_h: np.ndarray  # C_T on h (coroot coordinates), zero on l
    n_table: dict[Root, int]
    theta_table: dict[Root, complex]
    nondegenerate: bool
    bmap: BMap
    b_images: dict[Root, list[tuple[int, AlgebraElement]]] = field(default_factory=dict)

    def t_root(self, root: Root) -> Root | None:
        """T extended additively; ``None`` if the support leaves gamma1."""
        t = self.spec.t
        out = [0] * self.alg.rank
        for k, c in enumerate(root):
            if c:
                if k not in t:
                    return None
                out[t[k]] += c
        return tuple(out)

    @property
    def l_dim(self) -> int:
        return len(self.l_basis)

    def l_projector(self) -> np.ndarray:
        """Orthogonal projector onto l in coroot coordinates: ``P x``."""
        g = self.alg.h_gram_float
        p = np.zeros((self.alg.rank, self.alg.rank))
        for u in self.I1:
            p += np.outer(u, u @ g)
        return p

    def lambda_to_h(self, lam) -> np.ndarray:
        """Cartan element of ``l`` representing ``lam`` given in I1 coordinates."""
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        if lam.shape != (self.l_dim,):
            raise ValueError(f"lambda must have {self.l_dim} I1-coordinates, got shape {lam.shape}")
        return lam @ self.I1 if self.l_dim else np.zeros(self.alg.rank, dtype=complex)

    def root_pairing(self, root, lam) -> complex:
        """``(alpha, lambda)`` with ``lambda`` in I1 coordinates."""
        return complex(self.alg.pair(root, self.lambda_to_h(lam)))

    def report(self) -> dict:
        def fr(x):
            return str(x)

        return {
            "triple": self.spec.to_dict(),
            "gamma3": [i + 1 for i in self.gamma3],
            "orbits": [[i + 1 for i in o] for o in self.orbits],
            "nondegenerate": self.nondegenerate,
            "dim_l": self.l_dim,
            "dim_h0": len(self.h0_basis),
            "l_basis": [[fr(x) for x in v] for v in self.l_basis],
            "h0_basis": [[fr(x) for x in v] for v in self.h0_basis],
            "cayley": [[fr(x) for x in row] for row in self.cayley],
            "N": {"".join(map(str, r)): n for r, n in self.n_table.items()},
            "theta": {"".join(map(str, r)): _jsonable(th) for r, th in self.theta_table.items()},
        }


def _jsonable(z: complex):
    z = complex(z)
    return z.real if abs(z.imag) < 1e-14 else [z.real, z.imag]


def _solve_cayley(alg, spec, h0_basis):
    """Exact matrix of C_T in the h0_basis, plus a float least-squares cross-check."""
    n = alg.rank
    t = spec.t
    m = len(h0_basis)
    if m == 0:
        return [], np.zeros((0, 0))
    a = alg.cartan.matrix

    def pair(weight, hvec):  # <weight, h>
        return sum((weight[k] * a[j][k] * hvec[j] for j in range(n) for k in range(n)), Fraction(0))

    minus = []
    plus = []
    for i in spec.gamma1:
        w_minus = [Fraction(int(k == i) - int(k == t[i])) for k in range(n)]
        w_plus = [Fraction(int(k == i) + int(k == t[i])) for k in range(n)]
        minus.append(w_minus)
        plus.append(w_plus)
    lhs = [[pair(wm, u) for u in h0_basis] for wm in minus]
    cols = []
    for x in h0_basis:
        rhs = [pair(wp, x) for wp in plus]
        try:
            cols.append(ex.solve(lhs, rhs))
        except ValueError as exc:
            raise DegenerateTriple("Cayley transform system is inconsistent") from exc
    if ex.rank(lhs) < m:
        raise DegenerateTriple("Cayley transform is not unique")
    exact = ex.transpose(cols)
    lhs_f = np.array([[float(x) for x in row] for row in lhs])
    num = np.zeros((m, m))
    for k, x in enumerate(h0_basis):
        rhs = np.array([float(pair(wp, x)) for wp in plus])
        num[:, k] = np.linalg.lstsq(lhs_f, rhs, rcond=None)[0]
    return exact, num


def analyze_triple(alg: LieAlgebraData, spec: TripleSpec) -> TripleAnalysis:
    validate_triple(alg, spec)
    n = alg.rank
    t = spec.t
    orbits = gamma3_orbits(spec)
    gamma3 = tuple(sorted(i for o in orbits for i in o))
    # (alpha - T alpha)^sharp for alpha in gamma1
    diffs = []
    for i in spec.gamma1:
        w = [Fraction(int(k == i) - int(k == t[i])) for k in range(n)]
        diffs.append(alg.sharp_exact(w))
    chosen = ex.independent_columns(diffs) if diffs else []
    h0_basis = [diffs[c] for c in chosen]
    gh = alg.h_gram
    # l = {x : (d, x) = 0 for d in h0}
    constraints = [ex.matvec(gh, d) for d in h0_basis]
    l_basis = ex.nullspace(constraints, ncols=n) if constraints else [
        [Fraction(int(i == j)) for j in range(n)] for i in range(n)
    ]
    gram_l = [[ex.dot(u, v, gh) for v in l_basis] for u in l_basis]
    nondegenerate = ex.rank(gram_l) == len(l_basis) if l_basis else True
    if not nondegenerate:
        raise DegenerateTriple("form restricted to l is degenerate")
    ghf = alg.h_gram_float
    to_f = lambda vs: np.array([[float(x) for x in v] for v in vs]).reshape(len(vs), n)
    I1 = orthonormal_basis(ghf, to_f(l_basis))
    I2 = orthonormal_basis(ghf, to_f(h0_basis))
    cayley, num = _solve_cayley(alg, spec, h0_basis)
    if h0_basis:
        if np.max(np.abs(num - np.array([[float(x) for x in r] for r in cayley]))) > 1e-12:
            raise AssertionError("exact and least-squares Cayley transforms disagree")
    # C_T as an operator on h, zero on l
    basis = l_basis + h0_basis
    images = [[Fraction(0)] * n for _ in l_basis]
    for k in range(len(h0_basis)):
        img = [Fraction(0)] * n
        for m, u in enumerate(h0_basis):
            for j in range(n):
                img[j] += cayley[m][k] * u[j]
        images.append(img)
    # operator M with M basis[c] = images[c], columns are coroot coords
    bt = ex.transpose(basis)
    op = ex.matmul(ex.transpose(images), ex.inverse(bt))
    cayley_h = np.array([[float(x) for x in row] for row in op])
    bmap = BMap(alg, spec)
    analysis = TripleAnalysis(
        alg=alg, spec=spec, gamma3=gamma3, orbits=orbits, l_basis=l_basis, h0_basis=h0_basis,
        I1=I1, I2=I2, cayley=cayley, cayley_h=cayley_h, n_table={}, theta_table={},
        nondegenerate=nondegenerate, bmap=bmap,
    )
    _fill_orbit_tables(analysis)
    return analysis


def _fill_orbit_tables(an: TripleAnalysis) -> None:
    alg = an.alg
    g3 = set(an.gamma3)
    for r in alg.roots.positive_roots:
        f = alg.f(r)
        images = []
        cur = f
        lmax = alg.dim + 1
        periodic = all(k in g3 for k, c in enumerate(r) if c)
        for l in range(1, lmax + 1):
            cur = an.bmap.apply(cur, 1)
            if cur.is_zero():
                break
            images.append((l, cur))
            if periodic and cur.weight == tuple(-x for x in r):
                k = alg.f_index[r]
                an.n_table[r] = l
                an.theta_table[r] = complex(cur.coeffs[k])
                break
        an.b_images[r] = images
        if periodic and r not in an.n_table:
            raise AssertionError(f"root {r} in <Gamma3> has no finite B-orbit")


def cayley_transform(analysis: TripleAnalysis, x) -> np.ndarray:
    """Apply C_T to ``x`` given in coroot coordinates; ``x`` must lie in h0."""
    if not analysis.nondegenerate:
        raise DegenerateTriple("Cayley transform needs a nondegenerate triple")
    x = np.asarray(x, dtype=complex)
    p = analysis.l_projector()
    if np.max(np.abs(p @ x), initial=0.0) > 1e-10 * max(1.0, float(np.max(np.abs(x), initial=0.0))):
        raise ValueError("vector is not in h0")
    return analysis.cayley_h @ x


def theta_order(analysis: TripleAnalysis) -> int:
    """Smallest ``k`` with ``theta^k = 1`` for every tabulated theta (capped at 24)."""
    out = 1
    for th in analysis.theta_table.values():
        for k in range(1, 25):
            if abs(th**k - 1) < 1e-12:
                out = lcm(out, k)
                break
        else:
            raise AssertionError(f"theta {th} is not a root of unity of small order")
    return out
