"""Finite-type simple Lie algebras over an exact Chevalley-type basis.

Conventions
-----------
* ``a_ij = <alpha_j, h_i> = 2 (alpha_i, alpha_j) / (alpha_i, alpha_i)``, Bourbaki
  node numbering, long roots have squared length 2.
* Weights (elements of h*) are coordinate vectors over the simple roots.
  Cartan elements are coordinate vectors over the simple coroots ``h_i``.
  ``alg.sharp(weight)`` identifies h* with h through the invariant form.
* Basis order: ``e_alpha`` (positive roots by height, then reverse-lex),
  ``h_1..h_n``, then ``f_alpha`` in the mirrored order.  Every pair satisfies
  ``(e_alpha, f_alpha) = 1`` and ``[e_alpha, f_alpha] = alpha^sharp``.
* Composite root vectors are fixed bracketing words
  ``e_alpha = [e_i, e_{alpha - alpha_i}]`` with ``i`` the smallest admissible
  index, realized inside the adjoint module.  The resulting signs are the
  recorded structure-constant convention (``STRUCTURE_CONVENTION``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _exact as ex
from .errors import AlgebraMismatch, BadSlot, NonOrthonormalBasis, NotFiniteType, UnsupportedRank
from .reps import HighestWeightModule, SparseMatrix, build_highest_weight_module

STRUCTURE_CONVENTION = "adjoint-bracket-words: e_a = [e_i, e_(a-a_i)], i minimal; (e_a, f_a) = 1"
MAX_RANK = 8

Root = tuple[int, ...]


def cartan_matrix(series: str, rank: int) -> tuple[tuple[int, ...], ...]:
    """Cartan matrix of a finite type in Bourbaki numbering."""
    s = series.upper()
    n = int(rank)
    if n < 1:
        raise NotFiniteType(f"rank must be positive, got {rank}")
    if n > MAX_RANK:
        raise UnsupportedRank(f"rank {n} exceeds the cap of {MAX_RANK}")
    a = [[2 if i == j else 0 for j in range(n)] for i in range(n)]

    def link(i, j, aij=-1, aji=-1):
        a[i][j], a[j][i] = aij, aji

    if s == "A":
        for i in range(n - 1):
            link(i, i + 1)
    elif s == "B" and n >= 2:
        for i in range(n - 2):
            link(i, i + 1)
        link(n - 2, n - 1, -1, -2)
    elif s == "C" and n >= 2:
        for i in range(n - 2):
            link(i, i + 1)
        link(n - 2, n - 1, -2, -1)
    elif s == "D" and n >= 4:
        for i in range(n - 2):
            link(i, i + 1)
        link(n - 3, n - 1)
    elif s == "E" and n in (6, 7, 8):
        link(0, 2)
        link(1, 3)
        for i in range(2, n - 1):
            link(i, i + 1)
    elif s == "F" and n == 4:
        link(0, 1)
        link(1, 2, -1, -2)
        link(2, 3)
    elif s == "G" and n == 2:
        link(0, 1, -3, -1)
    else:
        raise NotFiniteType(f"unknown finite type {series}{rank}")
    return tuple(tuple(r) for r in a)


def _symmetrizer(a: Sequence[Sequence[int]]) -> tuple[Fraction, ...]:
    n = len(a)
    d: list[Fraction | None] = [None] * n
    d[0] = Fraction(1)
    stack = [0]
    while stack:
        i = stack.pop()
        for j in range(n):
            if j != i and a[i][j] != 0:
                if a[j][i] == 0:
                    raise NotFiniteType("a_ij = 0 must imply a_ji = 0")
                dj = d[i] * a[i][j] / a[j][i]
                if d[j] is None:
                    d[j] = dj
                    stack.append(j)
                elif d[j] != dj:
                    raise NotFiniteType("Cartan matrix is not symmetrizable")
    if any(x is None for x in d):
        raise NotFiniteType("Dynkin diagram is not connected")
    top = max(d)
    return tuple(x / top for x in d)


@dataclass(frozen=True)
class CartanDatum:
    matrix: tuple[tuple[int, ...], ...]
    type_label: str
    symmetrizer: tuple[Fraction, ...]

    @classmethod
    def from_type(cls, series: str, rank: int) -> "CartanDatum":
        return cls.from_matrix(cartan_matrix(series, rank), f"{series.upper()}{int(rank)}")

    @classmethod
    def from_matrix(cls, matrix, type_label: str | None = None) -> "CartanDatum":
        a = tuple(tuple(int(x) for x in row) for row in matrix)
        n = len(a)
        if n == 0 or any(len(r) != n for r in a):
            raise NotFiniteType("Cartan matrix must be square and non-empty")
        if n > MAX_RANK:
            raise UnsupportedRank(f"rank {n} exceeds the cap of {MAX_RANK}")
        for i in range(n):
            if a[i][i] != 2:
                raise NotFiniteType("diagonal entries must equal 2")
            for j in range(n):
                if i != j and a[i][j] > 0:
                    raise NotFiniteType("off-diagonal entries must be <= 0")
                if (a[i][j] == 0) != (a[j][i] == 0):
                    raise NotFiniteType("a_ij = 0 must imply a_ji = 0")
        d = _symmetrizer(a)
        sym = [[d[i] * a[i][j] for j in range(n)] for i in range(n)]
        # Sylvester criterion on the symmetrized matrix
        for k in range(1, n + 1):
            if ex.det([row[:k] for row in sym[:k]]) <= 0:
                raise NotFiniteType("symmetrized Cartan matrix is not positive definite")
        return cls(a, type_label or "custom", d)

    @property
    def rank(self) -> int:
        return len(self.matrix)

    @property
    def pairing(self) -> ex.Matrix:
        """``(alpha_i, alpha_j) = d_i a_ij``."""
        n = self.rank
        return [[self.symmetrizer[i] * self.matrix[i][j] for j in range(n)] for i in range(n)]


def parse_algebra_spec(doc) -> CartanDatum:
    """Accept ``"A2"``, ``{"type": "A", "rank": 2}`` or ``{"cartan": [[...]]}``."""
    if isinstance(doc, CartanDatum):
        return doc
    if isinstance(doc, str):
        s = doc.strip()
        if not s or not s[1:].isdigit():
            raise NotFiniteType(f"cannot parse algebra label {doc!r}")
        return CartanDatum.from_type(s[0], int(s[1:]))
    if isinstance(doc, dict):
        if "cartan" in doc or "matrix" in doc:
            return CartanDatum.from_matrix(doc.get("cartan", doc.get("matrix")), doc.get("label"))
        return CartanDatum.from_type(doc["type"], int(doc["rank"]))
    raise NotFiniteType(f"cannot parse algebra specification {doc!r}")


@dataclass(frozen=True)
class RootSystem:
    positive_roots: tuple[Root, ...]
    heights: tuple[int, ...]
    pairing: tuple[tuple[Fraction, ...], ...]

    def inner(self, a: Sequence, b: Sequence):
        return sum(
            (x * self.pairing[i][j] * y for i, x in enumerate(a) for j, y in enumerate(b) if x and y),
            Fraction(0),
        )

    @property
    def highest_root(self) -> Root:
        return self.positive_roots[-1]


def positive_roots(cartan: CartanDatum) -> RootSystem:
    """Positive roots by closure along simple-root strings."""
    a = cartan.matrix
    n = cartan.rank
    simple = [tuple(int(i == j) for j in range(n)) for i in range(n)]
    roots = set(simple)
    layer = list(simple)
    while layer:
        nxt = set()
        for beta in layer:
            for i in range(n):
                # alpha_i-string through beta: p - q = <beta, h_i>
                p = 0
                cur = beta
                while True:
                    cur = tuple(c - int(k == i) for k, c in enumerate(cur))
                    if cur in roots:
                        p += 1
                    else:
                        break
                q = p - sum(beta[k] * a[i][k] for k in range(n))
                if q > 0:
                    nxt.add(tuple(c + int(k == i) for k, c in enumerate(beta)))
        nxt -= roots
        roots |= nxt
        layer = sorted(nxt)
    ordered = sorted(roots, key=lambda r: (sum(r), tuple(-x for x in r)))
    pairing = tuple(tuple(row) for row in cartan.pairing)
    return RootSystem(tuple(ordered), tuple(sum(r) for r in ordered), pairing)


class LieAlgebraData:
    """Exact data of a finite-type simple Lie algebra; immutable after build."""

    def __init__(self, cartan: CartanDatum):
        self.cartan = cartan
        self.roots = positive_roots(cartan)
        n = cartan.rank
        self.rank = n
        pos = self.roots.positive_roots
        self.n_pos = len(pos)
        self.dim = n + 2 * self.n_pos
        self.e_index = {r: k for k, r in enumerate(pos)}
        self.h_index = {i: self.n_pos + i for i in range(n)}
        self.f_index = {r: self.dim - 1 - k for k, r in enumerate(pos)}
        labels = [None] * self.dim
        weights: list[Root] = [None] * self.dim  # type: ignore[list-item]
        for r, k in self.e_index.items():
            labels[k] = "e" + "".join(map(str, r))
            weights[k] = r
        for i, k in self.h_index.items():
            labels[k] = f"h{i + 1}"
            weights[k] = (0,) * n
        for r, k in self.f_index.items():
            labels[k] = "f" + "".join(map(str, r))
            weights[k] = tuple(-x for x in r)
        self.labels: tuple[str, ...] = tuple(labels)
        self.weights: tuple[Root, ...] = tuple(weights)
        self.d = cartan.symmetrizer
        self.a = cartan.matrix
        # word used for composite root vectors
        self.root_word: dict[Root, tuple[int, Root]] = {}
        for r in pos:
            if sum(r) == 1:
                continue
            for i in range(n):
                rest = tuple(c - int(k == i) for k, c in enumerate(r))
                if rest in self.e_index:
                    self.root_word[r] = (i, rest)
                    break
        self._build_structure()
        self._build_form()

    # ------------------------------------------------------------------ build
    def _build_structure(self) -> None:
        n = self.rank
        theta = self.roots.highest_root
        labels = [sum(theta[k] * self.a[i][k] for k in range(n)) for i in range(n)]
        module = build_highest_weight_module(self.a, labels)
        if module.dim != self.dim:
            raise NotFiniteType("adjoint module dimension mismatch; root closure failed")
        self.adjoint_module: HighestWeightModule = module
        mats: dict[int, SparseMatrix] = {}
        for i in range(n):
            simple = tuple(int(k == i) for k in range(n))
            mats[self.e_index[simple]] = module.e[i]
            mats[self.h_index[i]] = module.h[i]
        fraw: dict[Root, SparseMatrix] = {}
        for r in self.roots.positive_roots:
            if sum(r) == 1:
                i = r.index(1)
                fraw[r] = module.f[i]
            else:
                i, rest = self.root_word[r]
                mats[self.e_index[r]] = module.e[i].commutator(mats[self.e_index[rest]])
                fraw[r] = fraw[rest].commutator(module.f[i])
        for r in self.roots.positive_roots:
            sharp = self._cartan_matrix_of(self.sharp_exact(r), module)
            br = mats[self.e_index[r]].commutator(fraw[r])
            i, j = sharp.nonzero_entry()
            c = br.get(i, j) / sharp.get(i, j)
            if not (br - sharp.scale(c)).is_zero():
                raise AssertionError("root vector normalization failed")
            mats[self.f_index[r]] = fraw[r].scale(1 / c)
        self._mats = [mats[k] for k in range(self.dim)]
        # positions in the adjoint module of the simple-root weight vectors
        self._simple_pos = []
        for i in range(n):
            alpha = tuple(int(k == i) for k in range(n))
            depth = tuple(t - x for t, x in zip(theta, alpha))
            self._simple_pos.append(module.index[(depth, 0)])
        table: dict[tuple[int, int], dict[int, Fraction]] = {}
        for a_ in range(self.dim):
            for b_ in range(a_ + 1, self.dim):
                res = self._decompose(self._mats[a_].commutator(self._mats[b_]), self._add_w(a_, b_))
                if res:
                    table[(a_, b_)] = res
                    table[(b_, a_)] = {k: -v for k, v in res.items()}
        self._table = table
        del self._mats

    def _cartan_matrix_of(self, hvec, module) -> SparseMatrix:
        out = SparseMatrix(module.dim)
        for i, c in enumerate(hvec):
            if c:
                out = out + module.h[i].scale(c)
        return out

    def _add_w(self, a_: int, b_: int) -> Root:
        return tuple(x + y for x, y in zip(self.weights[a_], self.weights[b_]))

    def _decompose(self, m: SparseMatrix, weight: Root) -> dict[int, Fraction]:
        if m.is_zero():
            return {}
        if any(weight):
            if weight in self.e_index:
                k = self.e_index[weight]
            else:
                k = self.f_index[tuple(-x for x in weight)]
            basis = self._mats[k]
            i, j = basis.nonzero_entry()
            c = m.get(i, j) / basis.get(i, j)
            if not (m - basis.scale(c)).is_zero():
                raise AssertionError("bracket not proportional to root vector")
            return {k: c}
        vals = [m.get(p, p) for p in self._simple_pos]
        at = [[Fraction(self.a[j][k]) for j in range(self.rank)] for k in range(self.rank)]
        coeffs = ex.solve(at, vals)
        res = {self.h_index[j]: c for j, c in enumerate(coeffs) if c}
        check = SparseMatrix(m.n)
        for k, c in res.items():
            check = check + self._mats[k].scale(c)
        if not (m - check).is_zero():
            raise AssertionError("Cartan bracket decomposition failed")
        return res

    def _build_form(self) -> None:
        n = self.rank
        gh = [[Fraction(self.a[i][j]) / self.d[j] for j in range(n)] for i in range(n)]
        self.h_gram: ex.Matrix = gh
        self.h_gram_inv: ex.Matrix = ex.inverse(gh)
        gram = ex.zeros(self.dim, self.dim)
        for r in self.roots.positive_roots:
            i, j = self.e_index[r], self.f_index[r]
            gram[i][j] = gram[j][i] = Fraction(1)
        off = self.n_pos
        for i in range(n):
            for j in range(n):
                gram[off + i][off + j] = gh[i][j]
        self.gram: ex.Matrix = gram
        # rho as a Cartan element: (rho, h_i) = 1
        self.rho_h: list[Fraction] = ex.solve(gh, [Fraction(1)] * n)
        half = [Fraction(0)] * n
        for r in self.roots.positive_roots:
            for k in range(n):
                half[k] += Fraction(r[k], 2)
        self.rho_weight: list[Fraction] = half

    # -------------------------------------------------------------- weights
    def sharp_exact(self, weight: Sequence) -> list:
        """Image in h (coroot coordinates) of a weight given over simple roots."""
        return [self.d[k] * weight[k] for k in range(self.rank)]

    def sharp(self, weight) -> np.ndarray:
        return np.asarray(self.d_float * np.asarray(weight, dtype=complex))

    def flat(self, hvec) -> np.ndarray:
        """Inverse of :meth:`sharp`: weight (simple-root coords) of a Cartan element."""
        return np.asarray(hvec, dtype=complex) / self.d_float

    def pair(self, weight, hvec):
        """``<weight, h>`` for a weight over simple roots and h over coroots."""
        return np.asarray(hvec) @ (self.a_float @ np.asarray(weight))

    def inner(self, w1, w2):
        """Invariant form on h* (weights over simple roots)."""
        return np.asarray(w1) @ self.pairing_float @ np.asarray(w2)

    @cached_property
    def d_float(self) -> np.ndarray:
        return np.array([float(x) for x in self.d])

    @cached_property
    def a_float(self) -> np.ndarray:
        return np.array(self.a, dtype=float)

    @cached_property
    def pairing_float(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.cartan.pairing])

    @cached_property
    def h_gram_float(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.h_gram])

    @cached_property
    def rho_h_float(self) -> np.ndarray:
        return np.array([float(x) for x in self.rho_h])

    @cached_property
    def rho_weight_float(self) -> np.ndarray:
        return np.array([float(x) for x in self.rho_weight])

    def height(self, weight) -> int:
        return int(sum(weight))

    @property
    def dual_coxeter(self) -> int:
        # theta is long, so theta^vee = theta^sharp and h^vee = 1 + (rho, theta)
        return int(1 + self.roots.inner(self.rho_weight, self.roots.highest_root))

    # ------------------------------------------------------------- brackets
    def bracket_basis(self, a_: int, b_: int) -> dict[int, Fraction]:
        return self._table.get((a_, b_), {})

    @cached_property
    def structure(self) -> np.ndarray:
        """Dense float tensor ``c[a, b, k]`` with ``[x_a, x_b] = sum_k c[a,b,k] x_k``."""
        c = np.zeros((self.dim, self.dim, self.dim))
        for (a_, b_), res in self._table.items():
            for k, v in res.items():
                c[a_, b_, k] = float(v)
        return c

    @cached_property
    def gram_float(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.gram])

    def ad_matrix(self, coeffs) -> np.ndarray:
        """Matrix of ``ad x``: column b holds ``[x, x_b]``."""
        return np.einsum("a,abk->kb", np.asarray(coeffs), self.structure)

    def cartan_vector(self, hvec) -> np.ndarray:
        """Embed a Cartan element (coroot coordinates) into the full basis."""
        v = np.zeros(self.dim, dtype=complex)
        v[self.n_pos : self.n_pos + self.rank] = hvec
        return v

    def basis_index(self, label: str) -> int:
        return self.labels.index(label)

    def e(self, root) -> "AlgebraElement":
        return AlgebraElement.basis(self, self.e_index[tuple(root)])

    def f(self, root) -> "AlgebraElement":
        return AlgebraElement.basis(self, self.f_index[tuple(root)])

    def h(self, i: int) -> "AlgebraElement":
        return AlgebraElement.basis(self, self.h_index[i])

    def simple_root(self, i: int) -> Root:
        return tuple(int(k == i) for k in range(self.rank))

    def metadata(self) -> dict:
        return {
            "type": self.cartan.type_label,
            "rank": self.rank,
            "dim": self.dim,
            "positive_roots": [list(r) for r in self.roots.positive_roots],
            "cartan_matrix": [list(r) for r in self.cartan.matrix],
            "symmetrizer": [str(x) for x in self.d],
            "rho_coroot_coords": [str(x) for x in self.rho_h],
            "basis": list(self.labels),
            "structure_convention": STRUCTURE_CONVENTION,
        }


_CACHE: dict[tuple, LieAlgebraData] = {}


def build_simple_lie_algebra(cartan) -> LieAlgebraData:
    """Build (and memoize) the algebra for a Cartan datum or algebra spec."""
    datum = parse_algebra_spec(cartan)
    key = datum.matrix
    if key not in _CACHE:
        _CACHE[key] = LieAlgebraData(datum)
    return _CACHE[key]


# ---------------------------------------------------------------- elements
@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """Linear combination of basis vectors; exact when the coefficients are Fractions."""

    alg: LieAlgebraData
    coeffs: np.ndarray

    @classmethod
    def basis(cls, alg: LieAlgebraData, k: int, exact: bool = True) -> "AlgebraElement":
        v = np.array([Fraction(0)] * alg.dim, dtype=object) if exact else np.zeros(alg.dim, dtype=complex)
        v[k] = Fraction(1) if exact else 1.0
        return cls(alg, v)

    @classmethod
    def zero(cls, alg, exact: bool = True) -> "AlgebraElement":
        v = np.array([Fraction(0)] * alg.dim, dtype=object) if exact else np.zeros(alg.dim, dtype=complex)
        return cls(alg, v)

    @property
    def exact(self) -> bool:
        return self.coeffs.dtype == object

    def _check(self, other: "AlgebraElement") -> None:
        if other.alg is not self.alg:
            raise AlgebraMismatch("elements live in different algebras")

    def __add__(self, other):
        self._check(other)
        return AlgebraElement(self.alg, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return AlgebraElement(self.alg, self.coeffs - other.coeffs)

    def __neg__(self):
        return AlgebraElement(self.alg, -self.coeffs)

    def __mul__(self, c):
        return AlgebraElement(self.alg, self.coeffs * (Fraction(c) if self.exact and isinstance(c, int) else c))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, AlgebraElement) or other.alg is not self.alg:
            return NotImplemented
        return bool(np.all(self.coeffs == other.coeffs))

    def is_zero(self, tol: float = 0.0) -> bool:
        if self.exact:
            return all(c == 0 for c in self.coeffs)
        return bool(np.max(np.abs(self.coeffs), initial=0.0) <= tol)

    def support(self) -> list[int]:
        return [k for k, c in enumerate(self.coeffs) if c != 0]

    @property
    def weight(self) -> Root | None:
        ws = {self.alg.weights[k] for k in self.support()}
        return ws.pop() if len(ws) == 1 else None

    def __repr__(self) -> str:
        terms = [f"{c}*{self.alg.labels[k]}" for k, c in enumerate(self.coeffs) if c != 0]
        return " + ".join(terms) or "0"


def bracket(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    x._check(y)
    alg = x.alg
    if x.exact and y.exact:
        out = np.array([Fraction(0)] * alg.dim, dtype=object)
        for a_ in x.support():
            for b_ in y.support():
                for k, v in alg.bracket_basis(a_, b_).items():
                    out[k] += x.coeffs[a_] * y.coeffs[b_] * v
        return AlgebraElement(alg, out)
    cx = x.coeffs.astype(complex)
    cy = y.coeffs.astype(complex)
    return AlgebraElement(alg, np.einsum("a,b,abk->k", cx, cy, alg.structure))


def killing_free_form(x: AlgebraElement, y: AlgebraElement):
    """Invariant form ``(x, y)`` (long roots of length 2)."""
    x._check(y)
    if x.exact and y.exact:
        g = x.alg.gram
        return sum((x.coeffs[i] * g[i][j] * y.coeffs[j] for i in x.support() for j in y.support()), Fraction(0))
    return x.coeffs.astype(complex) @ x.alg.gram_float @ y.coeffs.astype(complex)


# ---------------------------------------------------------------- tensors
@dataclass(frozen=True, eq=False)
class TensorElement:
    """Element of g^{(x)k}; ``coeffs[a, b, ...]`` is the coefficient of x_a (x) x_b (x) ..."""

    alg: LieAlgebraData
    coeffs: np.ndarray

    @property
    def order(self) -> int:
        return self.coeffs.ndim

    def swap(self) -> "TensorElement":
        return TensorElement(self.alg, np.swapaxes(self.coeffs, 0, 1))

    def __add__(self, other):
        return TensorElement(self.alg, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return TensorElement(self.alg, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return TensorElement(self.alg, self.coeffs * c)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.max(np.abs(self.coeffs.astype(complex)), initial=0.0))

    def coeff(self, *labels: str):
        idx = tuple(self.alg.basis_index(lbl) for lbl in labels)
        return self.coeffs[idx]


def tensor_product(*elements: AlgebraElement) -> TensorElement:
    out = elements[0].coeffs
    for el in elements[1:]:
        out = np.multiply.outer(out, el.coeffs)
    return TensorElement(elements[0].alg, out)


def tensor_act(x: AlgebraElement, slot: int, t: TensorElement) -> TensorElement:
    """Adjoint action of ``x`` on one slot (1-based) of a tensor."""
    if x.alg is not t.alg:
        raise AlgebraMismatch("element and tensor live in different algebras")
    if slot not in range(1, t.order + 1):
        raise BadSlot(f"slot {slot} out of range for an order-{t.order} tensor")
    if x.exact and t.coeffs.dtype == object:
        ad = np.array([[Fraction(0)] * x.alg.dim for _ in range(x.alg.dim)], dtype=object)
        for a_ in x.support():
            for b_ in range(x.alg.dim):
                for k, v in x.alg.bracket_basis(a_, b_).items():
                    ad[k, b_] += x.coeffs[a_] * v
    else:
        ad = x.alg.ad_matrix(x.coeffs.astype(complex))
    moved = np.moveaxis(t.coeffs, slot - 1, 0)
    acted = np.tensordot(ad, moved, axes=([1], [0]))
    return TensorElement(t.alg, np.moveaxis(acted, 0, slot - 1))


def diagonal_action(x: AlgebraElement, t: TensorElement) -> TensorElement:
    """``(x (x) 1 + 1 (x) x + ...)`` acting on ``t``."""
    out = None
    for s in range(1, t.order + 1):
        term = tensor_act(x, s, t)
        out = term if out is None else out + term
    return out


def omega_exact(alg: LieAlgebraData) -> TensorElement:
    """Casimir tensor via dual bases (exact rationals)."""
    c = np.array([[Fraction(0)] * alg.dim for _ in range(alg.dim)], dtype=object)
    for r in alg.roots.positive_roots:
        i, j = alg.e_index[r], alg.f_index[r]
        c[i, j] = c[j, i] = Fraction(1)
    off = alg.n_pos
    for i in range(alg.rank):
        for j in range(alg.rank):
            c[off + i, off + j] = alg.h_gram_inv[i][j]
    return TensorElement(alg, c)


def casimir_omega(alg: LieAlgebraData, basis_of_h=None, tol: float = 1e-12) -> TensorElement:
    """``sum (e (x) f + f (x) e) + sum x_i (x) x_i`` with ``x_i`` orthonormal in h.

    ``basis_of_h`` is a sequence of Cartan elements in coroot coordinates.  When
    omitted, the exact dual-basis form is returned.
    """
    if basis_of_h is None:
        return omega_exact(alg)
    xs = np.asarray(basis_of_h, dtype=complex)
    if xs.shape != (alg.rank, alg.rank):
        raise NonOrthonormalBasis("need exactly rank-many Cartan vectors")
    gram = xs @ alg.h_gram_float @ xs.T
    if np.max(np.abs(gram - np.eye(alg.rank))) > tol:
        raise NonOrthonormalBasis("Cartan basis is not orthonormal for the invariant form")
    c = np.zeros((alg.dim, alg.dim), dtype=complex)
    for r in alg.roots.positive_roots:
        i, j = alg.e_index[r], alg.f_index[r]
        c[i, j] = c[j, i] = 1.0
    for x in xs:
        v = alg.cartan_vector(x)
        c += np.outer(v, v)
    return TensorElement(alg, c)


def orthonormal_basis(gram: np.ndarray, vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Modified Gram-Schmidt of ``vectors`` (rows) w.r.t. a symmetric form."""
    out: list[np.ndarray] = []
    for v in np.asarray(vectors, dtype=float):
        w = v.copy()
        for u in out:
            w = w - (u @ gram @ w) * u
        nrm2 = w @ gram @ w
        if nrm2 > tol:
            out.append(w / np.sqrt(nrm2))
    return np.array(out).reshape(len(out), np.asarray(vectors).shape[1] if len(vectors) else 0)
