"""Irreducible highest-weight modules built from a Cartan matrix alone.

A vector at depth ``beta`` (weight ``lam - beta``) of an irreducible module is
determined by its images under the raising operators ``e_i``, so each weight
space is constructed from candidates ``f_i w`` and pruned to an independent
set by comparing those images.  No structure constants are needed, which is
what lets :mod:`drmat.liealg` bootstrap the Chevalley basis from the adjoint
module.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import _exact as ex

Level = tuple[int, ...]


def _sub(a: Level, b: Level) -> Level:
    return tuple(x - y for x, y in zip(a, b))


def _add(a: Level, b: Level) -> Level:
    return tuple(x + y for x, y in zip(a, b))


@dataclass
class SparseMatrix:
    """Square sparse matrix, stored row-wise: ``rows[i] = {j: value}``."""

    n: int
    rows: dict[int, dict[int, Fraction]] = field(default_factory=dict)

    def set(self, i: int, j: int, value) -> None:
        if value:
            self.rows.setdefault(i, {})[j] = Fraction(value)

    def get(self, i: int, j: int) -> Fraction:
        return self.rows.get(i, {}).get(j, Fraction(0))

    def items(self):
        for i, row in self.rows.items():
            for j, v in row.items():
                yield i, j, v

    def scale(self, c) -> "SparseMatrix":
        c = Fraction(c)
        out = SparseMatrix(self.n)
        if c:
            out.rows = {i: {j: v * c for j, v in row.items()} for i, row in self.rows.items()}
        return out

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        out = SparseMatrix(self.n, {i: dict(r) for i, r in self.rows.items()})
        for i, j, v in other.items():
            row = out.rows.setdefault(i, {})
            s = row.get(j, 0) + v
            if s:
                row[j] = s
            else:
                row.pop(j, None)
                if not row:
                    del out.rows[i]
        return out

    def __sub__(self, other: "SparseMatrix") -> "SparseMatrix":
        return self + other.scale(-1)

    def __matmul__(self, other: "SparseMatrix") -> "SparseMatrix":
        out = SparseMatrix(self.n)
        for i, row in self.rows.items():
            acc: dict[int, Fraction] = {}
            for k, v in row.items():
                for j, w in other.rows.get(k, {}).items():
                    acc[j] = acc.get(j, 0) + v * w
            acc = {j: v for j, v in acc.items() if v}
            if acc:
                out.rows[i] = acc
        return out

    def commutator(self, other: "SparseMatrix") -> "SparseMatrix":
        return self @ other - other @ self

    def is_zero(self) -> bool:
        return not self.rows

    def nonzero_entry(self) -> tuple[int, int]:
        i = next(iter(self.rows))
        j = next(iter(self.rows[i]))
        return i, j

    def to_dense(self, dtype=complex):
        import numpy as np

        out = np.zeros((self.n, self.n), dtype=dtype)
        for i, j, v in self.items():
            out[i, j] = v if dtype is object else float(v)
        return out


@dataclass
class HighestWeightModule:
    """Irreducible module ``L(lam)`` with exact action of the generators.

    ``basis`` lists ``(beta, k)`` pairs: the k-th basis vector of the weight
    space ``lam - beta`` (``beta`` in simple-root coordinates).
    """

    cartan: tuple[tuple[int, ...], ...]
    highest: tuple[int, ...]
    basis: list[tuple[Level, int]]
    index: dict[tuple[Level, int], int]
    e: list[SparseMatrix]
    f: list[SparseMatrix]
    h: list[SparseMatrix]

    @property
    def dim(self) -> int:
        return len(self.basis)

    def weight_of(self, idx: int) -> Level:
        """Depth ``beta`` of a basis vector; its weight is ``lam - beta``."""
        return self.basis[idx][0]


def build_highest_weight_module(cartan, highest, max_dim: int = 5000) -> HighestWeightModule:
    """Construct ``L(lam)`` for dominant integral ``lam`` (Dynkin labels)."""
    a = [list(map(int, row)) for row in cartan]
    n = len(a)
    lam = [int(x) for x in highest]
    if any(x < 0 for x in lam):
        raise ValueError("highest weight must be dominant")
    zero: Level = (0,) * n
    simple = [tuple(int(i == j) for j in range(n)) for i in range(n)]

    def pairing(beta: Level, i: int) -> int:
        # <lam - beta, h_i>
        return lam[i] - sum(beta[k] * a[i][k] for k in range(n))

    dims: dict[Level, int] = {zero: 1}
    # E[i][beta]: matrix (dim(beta - a_i) x dim(beta)); F[i][beta]: (dim(beta + a_i) x dim(beta))
    E: list[dict[Level, ex.Matrix]] = [dict() for _ in range(n)]
    F: list[dict[Level, ex.Matrix]] = [dict() for _ in range(n)]
    frontier = [zero]
    total = 1
    while frontier:
        candidates_levels = sorted({_add(b, simple[i]) for b in frontier for i in range(n)})
        new_frontier = []
        for beta in candidates_levels:
            if beta in dims:
                continue
            lower = [_sub(beta, simple[j]) for j in range(n)]
            cands: list[tuple[int, int]] = []
            images: list[list[Fraction]] = []
            for i in range(n):
                src = lower[i]
                if src not in dims:
                    continue
                for w in range(dims[src]):
                    img: list[Fraction] = []
                    for j in range(n):
                        tgt = lower[j]
                        if tgt not in dims:
                            continue
                        vec = [Fraction(0)] * dims[tgt]
                        # f_i e_j w
                        mid = _sub(src, simple[j])
                        if mid in dims and src in E[j]:
                            ejw = [row[w] for row in E[j][src]]
                            fmat = F[i].get(mid)
                            if fmat is not None:
                                for r in range(dims[tgt]):
                                    vec[r] += sum((fmat[r][c] * ejw[c] for c in range(dims[mid])), Fraction(0))
                        if i == j:
                            vec[w] += pairing(src, i)
                        img.extend(vec)
                    cands.append((i, w))
                    images.append(img)
            if not images or all(not any(v) for v in images):
                continue
            chosen = ex.independent_columns(images)
            d = len(chosen)
            dims[beta] = d
            total += d
            if total > max_dim:
                raise MemoryError("module dimension exceeds max_dim")
            basis_imgs = [images[c] for c in chosen]
            # coordinates of each candidate in the chosen basis
            mat = ex.transpose(basis_imgs)  # rows = image coordinates, cols = basis vectors
            offset = 0
            for j in range(n):
                tgt = lower[j]
                if tgt not in dims or tgt == beta:
                    continue
                block = [row for row in mat[offset : offset + dims[tgt]]]
                E[j][beta] = block
                offset += dims[tgt]
            for i in range(n):
                src = lower[i]
                if src not in dims:
                    continue
                F[i][src] = [[Fraction(0)] * dims[src] for _ in range(d)]
            for (i, w), img in zip(cands, images):
                coords = ex.solve(mat, img)
                for r in range(d):
                    F[i][lower[i]][r][w] = coords[r]
            new_frontier.append(beta)
        frontier = new_frontier

    levels = sorted(dims, key=lambda b: (sum(b), tuple(-x for x in b)))
    basis = [(b, k) for b in levels for k in range(dims[b])]
    index = {key: i for i, key in enumerate(basis)}
    N = len(basis)
    e_mats, f_mats, h_mats = [], [], []
    for i in range(n):
        em, fm, hm = SparseMatrix(N), SparseMatrix(N), SparseMatrix(N)
        for beta, block in E[i].items():
            tgt = _sub(beta, simple[i])
            for r, row in enumerate(block):
                for c, v in enumerate(row):
                    em.set(index[(tgt, r)], index[(beta, c)], v)
        for src, block in F[i].items():
            tgt = _add(src, simple[i])
            for r, row in enumerate(block):
                for c, v in enumerate(row):
                    fm.set(index[(tgt, r)], index[(src, c)], v)
        for idx, (beta, _) in enumerate(basis):
            hm.set(idx, idx, pairing(beta, i))
        e_mats.append(em)
        f_mats.append(fm)
        h_mats.append(hm)
    return HighestWeightModule(
        cartan=tuple(tuple(r) for r in a),
        highest=tuple(lam),
        basis=basis,
        index=index,
        e=e_mats,
        f=f_mats,
        h=h_mats,
    )
