"""The verification bank: named triples and one check function per property.

Every check returns :class:`CheckResult` records; the CLI ``suite`` command and
the acceptance tests both run :data:`CRITERIA`.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import elliptic as el
from . import rmatrix as rm
from . import verma as vm
from .errors import ShapovalovSingular
from .liealg import build_simple_lie_algebra
from .triple import TripleAnalysis, TripleSpec, analyze_triple


@dataclass
class CheckResult:
    name: str
    criterion: int
    residual: float
    tol: float
    passed: bool
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)
    # "below": residual < tol passes; "above": residual > tol passes (negative controls)
    sense: str = "below"

    def to_dict(self) -> dict:
        return asdict(self)


def _result(name, crit, residual, tol, t0, sense="below", **detail) -> CheckResult:
    residual = float(residual)
    ok = residual < tol if sense == "below" else residual > tol
    return CheckResult(name, crit, residual, tol, bool(ok), time.perf_counter() - t0, detail, sense)


# ---------------------------------------------------------------- bank
FINITE_TRIPLES: dict[str, tuple[str, TripleSpec]] = {
    "A1 id": ("A1", TripleSpec.identity(1)),
    "A2 id": ("A2", TripleSpec.identity(2)),
    "A3 id": ("A3", TripleSpec.identity(3)),
    "B2 id": ("B2", TripleSpec.identity(2)),
    "G2 id": ("G2", TripleSpec.identity(2)),
    "A2 swap": ("A2", TripleSpec.make([0, 1], [0, 1], {0: 1, 1: 0})),
    "A3 flip": ("A3", TripleSpec.make([0, 1, 2], [0, 1, 2], {0: 2, 1: 1, 2: 0})),
    "A3 chain": ("A3", TripleSpec.make([0, 1], [1, 2], {0: 1, 1: 2})),
    "A2 chain": ("A2", TripleSpec.make([0], [1], {0: 1})),
}
DELTA_BANK = ("A1 id", "A2 swap", "A3 chain")
AFFINE_BANK: dict[str, tuple[str, tuple[int, ...]]] = {
    "A1 affine id": ("A1", (0, 1)),
    "A1 affine swap": ("A1", (1, 0)),
    "A2 rotation": ("A2", el.rotation(3, 1)),
}
TAU = 0.8j


def triple(name: str) -> TripleAnalysis:
    alg_name, spec = FINITE_TRIPLES[name]
    return analyze_triple(build_simple_lie_algebra(alg_name), spec)


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng([seed, salt])


# ---------------------------------------------------------------- 1-4: r-matrix
def check_felder(seed: int = 0, samples: int = 20) -> list[CheckResult]:
    out = []
    for k, name in enumerate(("A1 id", "A2 id", "B2 id")):
        t0 = time.perf_counter()
        an = triple(name)
        rng = _rng(seed, 100 + k)
        worst = 0.0
        for _ in range(samples):
            lam = rm.sample_lambda(an, rng)
            worst = max(worst, float(np.max(np.abs(rm.eval_r(an, lam).tensor.coeffs - rm.felder_r(an.alg, an.lambda_to_h(lam))))))
        out.append(_result(f"felder {name}", 1, worst, 1e-10, t0))
    return out


def sl3_swap_reference(an: TripleAnalysis, lam) -> np.ndarray:
    """Closed coefficients for the A2 swap, scalar ``lambda = (alpha_1, lambda)``."""
    alg = an.alg
    y = np.exp(-an.root_pairing((1, 0), lam))
    out = np.zeros((alg.dim, alg.dim), dtype=complex)
    a1, a2, a12 = (1, 0), (0, 1), (1, 1)
    e, f = alg.e_index, alg.f_index
    off = alg.n_pos
    for i in range(alg.rank):
        for j in range(alg.rank):
            out[off + i, off + j] = -float(alg.h_gram_inv[i][j]) / 2
    for r in (a1, a2):
        out[e[r], f[r]] = y**2 / (1 - y**2)  # sign follows r + r21 = -Omega
        out[f[r], e[r]] = -1 / (1 - y**2)
    out[e[a12], f[a12]] = -(y**2) / (1 + y**2)
    out[f[a12], e[a12]] = -1 / (1 + y**2)
    c = y / (1 - y**2)
    for p, q in ((a1, a2), (a2, a1)):
        out[e[p], f[q]] += c
        out[f[q], e[p]] -= c
    return out


def check_sl3_example(seed: int = 0, samples: int = 10) -> list[CheckResult]:
    t0 = time.perf_counter()
    an = triple("A2 swap")
    rng = _rng(seed, 200)
    worst = 0.0
    sym = 0.0
    for _ in range(samples):
        lam = rm.sample_lambda(an, rng)
        r = rm.eval_r(an, lam).tensor.coeffs
        worst = max(worst, float(np.max(np.abs(r - sl3_swap_reference(an, lam)))))
        sym = max(sym, rm.symmetric_defect(an, r))
    return [_result("sl3 swap coefficients", 2, worst, 1e-10, t0),
            _result("sl3 swap r + r21 = -Omega", 2, sym, 1e-10, t0)]


CDYBE_BANK = ("A1 id", "A2 id", "A3 id", "B2 id", "G2 id", "A2 swap", "A3 flip", "A3 chain", "A2 chain")


def check_cdybe(seed: int = 0, samples: int = 20) -> list[CheckResult]:
    out = []
    for k, name in enumerate(CDYBE_BANK):
        t0 = time.perf_counter()
        an = triple(name)
        rng = _rng(seed, 300 + k)
        worst = gap = 0.0
        for _ in range(samples):
            rep = rm.cdybe_residual(an, rm.sample_lambda(an, rng), method="both")
            worst = max(worst, rep.norm)
            gap = max(gap, rep.derivative_gap or 0.0)
        out.append(_result(f"cdybe {name}", 3, worst, 1e-9, t0))
        out.append(_result(f"cdybe fd-gap {name}", 3, gap, 1e-4, t0))
    return out


def check_structure(seed: int = 0, samples: int = 20) -> list[CheckResult]:
    out = []
    for k, name in enumerate(CDYBE_BANK):
        t0 = time.perf_counter()
        an = triple(name)
        rng = _rng(seed, 400 + k)
        s = inv = 0.0
        for _ in range(samples):
            r = rm.eval_r(an, rm.sample_lambda(an, rng)).tensor.coeffs
            s = max(s, rm.symmetric_defect(an, r))
            inv = max(inv, rm.l_invariance_defect(an, r))
        out.append(_result(f"r + r21 = -Omega {name}", 4, s, 1e-10, t0))
        out.append(_result(f"l-invariance {name}", 4, inv, 1e-10, t0))
    return out


# ---------------------------------------------------------------- 5-9: traces
def check_delta_b(seed: int = 0, height: int = 6) -> list[CheckResult]:
    out = []
    for name in DELTA_BANK:
        t0 = time.perf_counter()
        res = max(vm.reciprocity_defect(triple(name), height).values())
        out.append(_result(f"delta_B reciprocity {name}", 5, res, 1e-12, t0, height=height))
    return out


def make_trace_setup(an: TripleAnalysis, modules, vectors, nus, rng, H: int, tries: int = 20) -> vm.TraceSetup:
    nu = np.sum([np.array(n, dtype=float) for n in nus], axis=0) if nus else np.zeros(an.alg.rank)
    for _ in range(tries):
        xi = rng.normal(size=an.l_dim) + 1j * rng.normal(size=an.l_dim)
        sol = vm.solve_weight_constraint(an, nu, xi)
        setup = vm.TraceSetup(an, modules, vectors, nus, sol, H)
        try:
            vm.trace_function(setup)
        except ShapovalovSingular:
            continue
        return setup
    raise ShapovalovSingular("no generic mu found", degree=None)


def trace_configurations(seed: int = 0, H: int = 3) -> dict[str, vm.TraceSetup]:
    """The trace bank: A1 (T = id) with r = 0, 1, 2 and the A2 swap with r = 1, 2 (adjoint modules)."""
    out = {}
    an = triple("A1 id")
    alg = an.alg
    ad = vm.adjoint_module(alg)
    rng = _rng(seed, 500)
    h = np.zeros(alg.dim, dtype=complex)
    h[alg.h_index[0]] = 1.0
    e = np.zeros(alg.dim, dtype=complex)
    e[alg.e_index[(1,)]] = 1.0
    f = np.zeros(alg.dim, dtype=complex)
    f[alg.f_index[(1,)]] = 1.0
    out["A1 id r=0"] = make_trace_setup(an, [], [], [], rng, H)
    out["A1 id r=1"] = make_trace_setup(an, [ad], [h], [(0,)], rng, H)
    out["A1 id r=2"] = make_trace_setup(an, [ad, ad], [e, f], [(1,), (-1,)], rng, H)
    an2 = triple("A2 swap")
    alg2 = an2.alg
    ad2 = vm.adjoint_module(alg2)
    h2 = np.zeros(alg2.dim, dtype=complex)
    h2[alg2.h_index[0]] = 1.0
    h2[alg2.h_index[1]] = 0.35
    out["A2 swap r=1"] = make_trace_setup(an2, [ad2], [h2], [(0, 0)], rng, H)
    e2 = np.zeros(alg2.dim, dtype=complex)
    e2[alg2.e_index[(1, 0)]] = 1.0
    f2 = np.zeros(alg2.dim, dtype=complex)
    f2[alg2.f_index[(0, 1)]] = 1.0
    out["A2 swap r=2"] = make_trace_setup(an2, [ad2, ad2], [e2, f2], [(1, 0), (0, -1)], rng, H)
    return out


def check_kzb(seed: int = 0, height: int = 3) -> list[CheckResult]:
    out = []
    for name, setup in trace_configurations(seed, height).items():
        r = len(setup.modules)
        if r == 0:
            continue
        t0 = time.perf_counter()
        ff = vm.normalized_trace(setup)
        worst = max(vm.kzb_residual(setup, i, ff).max_residual for i in range(1, r + 1))
        out.append(_result(f"kzb {name}", 6, worst, 1e-9, t0, height=height))
    return out


def check_second_order(seed: int = 0, height: int = 3) -> list[CheckResult]:
    out = []
    for name, setup in trace_configurations(seed, height).items():
        t0 = time.perf_counter()
        ff = vm.normalized_trace(setup)
        res = vm.second_order_residual(setup, ff).max_residual
        detail = {"height": height}
        if not setup.modules:
            zero = vm.class_key(setup.an, (0,) * setup.an.alg.rank)
            rest = max((float(np.max(np.abs(c))) for k, c in ff.terms.items() if k != zero), default=0.0)
            res = max(res, rest, abs(complex(ff.terms[zero]) - 1))
            detail["normalized_trace_is_one"] = True
        out.append(_result(f"second order {name}", 7, res, 1e-9, t0, **detail))
    return out


def check_weyl(seed: int = 0, height: int = 5) -> list[CheckResult]:
    out = []
    for name in DELTA_BANK:
        t0 = time.perf_counter()
        res = vm.weyl_denominator_identity(triple(name), height).max_residual
        out.append(_result(f"weyl denominator {name}", 8, res, 1e-10, t0, height=height))
    return out


def check_commutativity(seed: int = 0, samples: int = 10, height: int = 4) -> list[CheckResult]:
    t0 = time.perf_counter()
    an = triple("A1 id")
    ad = vm.adjoint_module(an.alg)
    rng = _rng(seed, 900)
    worst = 0.0
    for _ in range(samples):
        w = vm.random_invariant_series(an, [ad, ad], height, rng)
        worst = max(worst, vm.kzb_commutator_residual(an, [ad, ad], w).max_residual)
    return [_result("kzb commutativity A1 id r=2", 9, worst, 1e-9, t0, samples=samples, height=height)]


# ---------------------------------------------------------------- 10-12: elliptic
def affine(name: str) -> el.AffineTriple:
    alg_name, perm = AFFINE_BANK[name]
    return el.build_affine_triple(alg_name, perm)


def check_elliptic_oracle(seed: int = 0, samples: int = 10, target: float = 1e-8) -> list[CheckResult]:
    out = []
    for k, name in enumerate(("A1 affine id", "A1 affine swap")):
        t0 = time.perf_counter()
        at = affine(name)
        rng = _rng(seed, 1000 + k)
        ratio = 0.0
        worst_bound = 0.0
        cutoffs = []
        for _ in range(samples):
            lam = el.sample_elliptic_lambda(at, rng)
            u = el.sample_u(rng, TAU, at.g)
            m = el.cutoff_for_bound(at, lam, u, TAU, target)
            cmp = el.oracle_comparison(at, lam, u, TAU, m)
            ratio = max(ratio, cmp["difference"] / max(cmp["tail_bound"], 1e-300))
            worst_bound = max(worst_bound, cmp["tail_bound"])
            cutoffs.append(m)
        out.append(_result(f"elliptic oracle {name} (error / tail bound)", 10, ratio, 10.0, t0, max_tail_bound=worst_bound,
                           cutoffs=cutoffs, note="residual is |series - closed| / tail bound"))
    return out


def check_belavin(seed: int = 0, samples: int = 10) -> list[CheckResult]:
    out = []
    for k, name in enumerate(("A1 affine swap", "A2 rotation")):
        t0 = time.perf_counter()
        at = affine(name)
        rng = _rng(seed, 1100 + k)
        dep = cy = 0.0
        for _ in range(samples):
            lam = el.sample_elliptic_lambda(at, rng)
            us = rng.uniform(-0.5, 0.5, 3) + 1j * rng.uniform(-0.3, 0.3, 3)
            dep = max(dep, el.lambda_dependence(at, lam, us[0], TAU))
            cy = max(cy, el.cdybe_spectral_residual(at, lam, *us, TAU).norm)
        out.append(_result(f"belavin lambda-independence {name}", 11, dep, 1e-8, t0,
                           l_dim=at.l_dim, dynamical_parameters=at.dynamical_parameters,
                           orbit_count_consistent=el.orbit_count_consistent(at)))
        out.append(_result(f"belavin spectral cdybe {name}", 11, cy, 1e-7, t0))
        out.append(_result(f"orbit count {name}", 11, abs(at.l_dim - at.dynamical_parameters), 0.5, t0))
    t0 = time.perf_counter()
    at = affine("A1 affine id")
    rng = _rng(seed, 1150)
    cy = 0.0
    for _ in range(samples):
        lam = el.sample_elliptic_lambda(at, rng)
        us = rng.uniform(-0.5, 0.5, 3) + 1j * rng.uniform(-0.3, 0.3, 3)
        cy = max(cy, el.cdybe_spectral_residual(at, lam, *us, TAU).norm)
    out.append(_result("spectral cdybe A1 affine id", 11, cy, 1e-7, t0))
    return out


def check_theta(seed: int = 0, samples: int = 20) -> list[CheckResult]:
    t0 = time.perf_counter()
    rng = _rng(seed, 1200)
    worst = {"odd": 0.0, "period_1": 0.0, "period_tau": 0.0}
    for _ in range(samples):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5))
        u = complex(rng.uniform(-1, 1), rng.uniform(-0.7, 0.7))
        for k, v in el.theta_identity_residuals(u, tau).items():
            worst[k] = max(worst[k], float(v))
    return [_result(f"theta {k}", 12, v, 1e-12, t0) for k, v in worst.items()]


# ---------------------------------------------------------------- 13: controls
def check_mutations(seed: int = 0) -> list[CheckResult]:
    out = []
    t0 = time.perf_counter()
    an = triple("A3 chain")
    rng = _rng(seed, 1300)
    worst = min(rm.cdybe_residual(an, rm.sample_lambda(an, rng), drop_cayley=True).norm for _ in range(5))
    out.append(_result("mutation: dropped Cayley term (A3 chain cdybe)", 13, worst, 1e-4, t0, sense="above"))

    t0 = time.perf_counter()
    setup = trace_configurations(seed, 3)["A1 id r=2"]
    alg = setup.an.alg
    pert = np.zeros((alg.dim, alg.dim))
    pert[alg.e_index[(1,)], alg.f_index[(1,)]] = 0.01
    res = vm.kzb_residual(setup, 1, perturb=pert).max_residual
    out.append(_result("mutation: perturbed r (A1 id r=2 kzb)", 13, res, 1e-4, t0, sense="above"))

    t0 = time.perf_counter()
    at = affine("A1 affine id")
    rng = _rng(seed, 1310)
    lam = el.sample_elliptic_lambda(at, rng)
    us = rng.uniform(-0.5, 0.5, 3) + 1j * rng.uniform(-0.3, 0.3, 3)
    res = el.cdybe_spectral_residual(at, lam, *us, TAU, chi_scale=1.01).norm
    out.append(_result("mutation: chi term +1% (A1 affine spectral cdybe)", 13, res, 1e-4, t0, sense="above"))
    return out


CRITERIA: dict[int, tuple[str, Callable[..., list[CheckResult]], float]] = {
    1: ("Felder reduction", check_felder, 1.0),
    2: ("sl(3) swap example", check_sl3_example, 1.0),
    3: ("CDYBE", check_cdybe, 30.0),
    4: ("structural identities", check_structure, 5.0),
    5: ("delta_B reciprocity", check_delta_b, 10.0),
    6: ("KZB", check_kzb, 300.0),
    7: ("second-order equation", check_second_order, 300.0),
    8: ("Weyl denominator identity", check_weyl, 10.0),
    9: ("KZB commutativity", check_commutativity, 60.0),
    10: ("elliptic oracle", check_elliptic_oracle, 120.0),
    11: ("Belavin degeneration", check_belavin, 120.0),
    12: ("theta kernel", check_theta, 1.0),
    13: ("negative controls", check_mutations, 60.0),
}


def run_criterion(k: int, seed: int = 0) -> tuple[list[CheckResult], float]:
    _, fn, _ = CRITERIA[k]
    t0 = time.perf_counter()
    res = fn(seed=seed)
    return res, time.perf_counter() - t0


def run_suite(seed: int = 0, criteria=None) -> dict:
    report = {"seed": seed, "criteria": {}, "checks": []}
    ok = True
    for k in sorted(criteria or CRITERIA):
        title, _, bound = CRITERIA[k]
        res, secs = run_criterion(k, seed)
        passed = all(r.passed for r in res) and secs < bound
        ok &= passed
        report["criteria"][str(k)] = {"title": title, "passed": passed, "seconds": secs, "time_bound": bound}
        report["checks"].extend(r.to_dict() for r in res)
    report["passed"] = ok
    return report
