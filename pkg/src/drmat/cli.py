"""``drmat`` command-line front end.

Every command reads flags (optionally merged over a JSON ``--config`` file, flags
winning), prints one JSON report on stdout and exits 0 (all checks pass),
1 (usage or setup error) or 2 (a check failed).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import elliptic as el
from . import rmatrix as rm
from . import suite
from . import verma as vm
from .errors import (AlgebraMismatch, BadTripleFile, DegenerateTriple, DrmatError, NotAutomorphism, NotBijective,
                     NotFiniteType, NotIsometric, UnsupportedRank, UsageError)
from .liealg import STRUCTURE_CONVENTION, build_simple_lie_algebra, parse_algebra_spec
from .triple import TripleSpec, analyze_triple

COMMANDS = (
    "algebra-info", "triple-analyze", "r-eval", "cdybe-check", "delta-b", "kzb-check",
    "second-order-check", "elliptic-eval", "elliptic-oracle-check", "belavin-check", "suite",
)
NEEDS_ALGEBRA = {"algebra-info", "triple-analyze", "r-eval", "cdybe-check", "delta-b", "kzb-check",
                 "second-order-check", "elliptic-eval", "elliptic-oracle-check", "belavin-check"}
CONVENTIONS = {
    "structure_constants": STRUCTURE_CONVENTION,
    "wedge": "a ^ b = a (x) b - b (x) a",
    "oracle_exponent": "z = exp(2 pi i u / g), g = ht(theta) + 1; q^(1/g) multiplies each unit of principal degree; "
                       "(alpha, lambda~) = (alpha, lambda) - 2 pi i tau |alpha| / g",
}
DEFAULTS = {
    "samples": 20, "seed": 0, "tol": 1e-9, "height": 3, "cutoff": 24, "tau": "0.8i",
    "modules": "adjoint", "mode": "both", "triple": "id", "target": 1e-8,
}


@dataclass
class JobSpec:
    command: str
    algebra: str | dict | None = None
    triple: str = "id"
    lam: list[complex] | None = None
    u: complex | None = None
    tau: complex = 0.8j
    height: int = 3
    cutoff: int = 24
    samples: int = 20
    seed: int = 0
    tol: float = 1e-9
    target: float = 1e-8
    modules: list[str] = field(default_factory=lambda: ["adjoint"])
    weights: list[list[int]] | None = None
    mode: str = "both"
    perm: list[int] | None = None
    mutate: bool = False
    criteria: list[int] | None = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _complex(text) -> complex:
    if isinstance(text, (int, float, complex)):
        return complex(text)
    s = str(text).strip().replace(" ", "").replace("i", "j")
    try:
        return complex(s)
    except ValueError as exc:
        raise UsageError(f"cannot parse complex number {text!r}") from exc


def _complex_list(value) -> list[complex]:
    if isinstance(value, (list, tuple)):
        return [_complex(x) for x in value]
    s = str(value).strip()
    if s.startswith("["):
        try:
            return [_complex(x) for x in json.loads(s)]
        except json.JSONDecodeError as exc:
            raise UsageError(f"--lambda: {exc}") from exc
    return [_complex(x) for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="drmat", description="Dynamical r-matrices for generalized BD triples.")
    p.add_argument("--version", action="version", version=f"drmat {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--algebra", help='label such as "A2" or a JSON algebra document')
    p.add_argument("--triple", help='JSON triple file, inline JSON, or "id"')
    p.add_argument("--lambda", dest="lam", help="dynamical parameter, comma separated I1 coordinates")
    p.add_argument("--u", help="spectral parameter")
    p.add_argument("--tau", help="modular parameter, e.g. 0.8i")
    p.add_argument("--height", type=int, help="truncation height H")
    p.add_argument("--cutoff", type=int, help="series cutoff M")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int, help="random seed (fallback: $DRMAT_SEED, then 0)")
    p.add_argument("--tol", type=float)
    p.add_argument("--target", type=float, help="tail bound target for automatic cutoffs")
    p.add_argument("--modules", help='comma separated module names ("adjoint", "L[1,0]")')
    p.add_argument("--weights", help="JSON list of weights (root coordinates) of the inserted vectors")
    p.add_argument("--mode", choices=("product", "trace", "both"))
    p.add_argument("--affine-rotation", type=int, help="rotate the affine A_n diagram by k")
    p.add_argument("--perm", help="affine node permutation, comma separated, node 0 = affine node")
    p.add_argument("--criteria", help="comma separated criterion numbers for suite")
    p.add_argument("--mutate", action="store_true", help="debug: run against a deliberately broken r")
    p.add_argument("--output", help="also write the report to this file")
    return p


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"--config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("--config: expected a JSON object")
    out = {k.replace("-", "_"): v for k, v in doc.items()}
    if "lambda" in out:
        out["lam"] = out.pop("lambda")
    return out


def parse_job(argv: list[str]) -> tuple[JobSpec, str | None]:
    """Resolve flags > config file > environment > defaults into a :class:`JobSpec`."""
    ns = build_parser().parse_args(argv)
    cfg = _load_config(ns.config)
    flags = {k: v for k, v in vars(ns).items() if v is not None and v is not False}
    if "affine_rotation" in flags and "perm" in flags:
        raise UsageError("--affine-rotation and --perm are mutually exclusive")

    def get(key):
        if key in flags:
            return flags[key]
        if key in cfg:
            return cfg[key]
        if key == "seed" and os.environ.get("DRMAT_SEED"):
            try:
                return int(os.environ["DRMAT_SEED"])
            except ValueError as exc:
                raise UsageError("DRMAT_SEED must be an integer") from exc
        return DEFAULTS.get(key)

    cmd = ns.command
    algebra = get("algebra")
    if cmd in NEEDS_ALGEBRA and algebra is None:
        raise UsageError(f"{cmd} requires --algebra")
    if isinstance(algebra, str) and algebra.strip().startswith("{"):
        algebra = json.loads(algebra)
    spec = JobSpec(command=cmd, algebra=algebra)
    spec.triple = get("triple")
    for key in ("height", "cutoff", "samples", "seed"):
        try:
            setattr(spec, key, int(get(key)))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"--{key} must be an integer") from exc
    for key in ("tol", "target"):
        try:
            setattr(spec, key, float(get(key)))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"--{key} must be a number") from exc
    if spec.samples < 1:
        raise UsageError("--samples must be positive")
    spec.tau = _complex(get("tau"))
    if spec.tau.imag <= 0:
        raise UsageError("--tau must have positive imaginary part")
    if get("lam") is not None:
        spec.lam = _complex_list(get("lam"))
    if get("u") is not None:
        spec.u = _complex(get("u"))
    mods = get("modules")
    spec.modules = list(mods) if isinstance(mods, list) else _split_modules(mods)
    w = get("weights")
    if w is not None:
        spec.weights = json.loads(w) if isinstance(w, str) else w
    spec.mode = get("mode")
    if get("affine_rotation") is not None:
        n = parse_algebra_spec(algebra).rank
        spec.perm = list(el.rotation(n + 1, int(get("affine_rotation"))))
    elif get("perm") is not None:
        p = get("perm")
        spec.perm = [int(x) for x in (p if isinstance(p, list) else str(p).split(","))]
    spec.mutate = bool(get("mutate"))
    if get("criteria") is not None:
        c = get("criteria")
        spec.criteria = [int(x) for x in (c if isinstance(c, list) else str(c).split(","))]
    return spec, flags.get("output", cfg.get("output"))


def _split_modules(text: str) -> list[str]:
    """Split on commas outside brackets, so ``L[1,0],adjoint`` has two entries."""
    out, depth, cur = [], 0, ""
    for ch in text:
        depth += ch in "[("
        depth -= ch in "])"
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


# ---------------------------------------------------------------- helpers
def _load_triple(alg, text: str) -> TripleSpec:
    if text in (None, "id", "identity"):
        return TripleSpec.identity(alg.rank)
    if text == "empty":
        return TripleSpec.empty()
    if text.strip().startswith("{"):
        return TripleSpec.from_json(text)
    try:
        return TripleSpec.from_json(Path(text).read_text())
    except OSError as exc:
        raise BadTripleFile(f"--triple: cannot read {text!r}: {exc}") from exc


def _analysis(spec: JobSpec):
    alg = build_simple_lie_algebra(parse_algebra_spec(spec.algebra))
    return analyze_triple(alg, _load_triple(alg, spec.triple))


def _cx(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def sparse_triples(tensor: np.ndarray, tol: float = 1e-14) -> list[list]:
    """``[i, j, re, im]`` for every entry with modulus above ``tol``."""
    out = []
    for (i, j), z in np.ndenumerate(np.asarray(tensor, dtype=complex)):
        if abs(z) > tol:
            out.append([int(i), int(j), float(z.real), float(z.imag)])
    return out


def _lambda_for(spec: JobSpec, dim: int, rng) -> np.ndarray:
    if spec.lam is None:
        raise UsageError("--lambda is required")
    lam = np.array(spec.lam, dtype=complex)
    if lam.shape != (dim,):
        raise UsageError(f"--lambda needs {dim} coordinates, got {lam.size}")
    return lam


def _checks_report(checks: list[dict]) -> tuple[dict, int]:
    ok = all(c["passed"] for c in checks)
    return {"checks": checks, "passed": ok}, 0 if ok else 2


def _check(name, residual, tol, **detail) -> dict:
    return {"name": name, "residual": float(residual), "tol": tol, "passed": bool(residual < tol), **detail}


# ---------------------------------------------------------------- commands
def _cmd_algebra_info(spec):
    alg = build_simple_lie_algebra(parse_algebra_spec(spec.algebra))
    return {"algebra": alg.metadata()}, 0


def _cmd_triple_analyze(spec):
    return {"analysis": _analysis(spec).report()}, 0


def _cmd_r_eval(spec):
    an = _analysis(spec)
    lam = _lambda_for(spec, an.l_dim, None)
    val = rm.eval_r(an, lam)
    tensor = val.tensor.coeffs + (_mutation(an) if spec.mutate else 0)
    return {"basis": list(an.alg.labels), "lambda": [_cx(x) for x in lam],
            "pole_margin": val.pole_margin, "tensor": sparse_triples(tensor)}, 0


def _cmd_cdybe(spec):
    an = _analysis(spec)
    rng = np.random.default_rng(spec.seed)
    lams = [np.array(spec.lam, dtype=complex)] if spec.lam is not None else [rm.sample_lambda(an, rng) for _ in range(spec.samples)]
    worst = gap = 0.0
    for lam in lams:
        rep = rm.cdybe_residual(an, lam, method="both")
        if spec.mutate:
            rr, d_r, _ = rm.r_coefficients(an, lam, derivative=True)
            rep.norm = float(np.max(np.abs(rm.bracket_terms(an.alg, rr + _mutation(an)) + rm.derivative_terms(an, d_r))))
        worst = max(worst, rep.norm)
        gap = max(gap, rep.derivative_gap or 0.0)
    checks = [_check("cdybe", worst, spec.tol, samples=len(lams)), _check("fd-gap", gap, 1e-4)]
    return _checks_report(checks)


def _cmd_delta_b(spec):
    an = _analysis(spec)
    checks = []
    if spec.mode == "both":
        per = vm.reciprocity_defect(an, spec.height)
        checks.append(_check("reciprocity", max(per.values()), 1e-12,
                             per_height={str(k): v for k, v in per.items()}))
    series = vm.delta_b(an, spec.height, "trace" if spec.mode == "trace" else "product")
    coeffs = [[list(b), _cx(c)] for _, b, c in series.items()]
    rep, code = _checks_report(checks)
    rep["series"] = {"mode": spec.mode if spec.mode != "both" else "product", "prefactor": [_cx(x) for x in series.prefactor],
                     "coefficients": coeffs}
    return rep, code


def _trace_setup(spec, an):
    alg = an.alg
    mods = [vm.module_from_name(alg, m) for m in spec.modules]
    if spec.weights is not None and len(spec.weights) != len(mods):
        raise UsageError("--weights needs one weight per module")
    rng = np.random.default_rng(spec.seed)
    vectors, nus = [], []
    for k, mod in enumerate(mods):
        wt = tuple(spec.weights[k]) if spec.weights is not None else (0,) * alg.rank
        idx = mod.weight_indices(wt)
        if not idx:
            raise UsageError(f"module {mod.name} has no weight {list(wt)}")
        v = np.zeros(mod.dim, dtype=complex)
        v[idx] = rng.normal(size=len(idx))
        vectors.append(v)
        nus.append(tuple(int(x) for x in wt))
    return suite.make_trace_setup(an, mods, vectors, nus, rng, spec.height)


def _mutation(an):
    alg = an.alg
    pert = np.zeros((alg.dim, alg.dim))
    pos = alg.roots.positive_roots[0]
    pert[alg.e_index[pos], alg.f_index[pos]] = 0.01
    return pert


def _trace_report(setup, spec, report):
    return {"mu": [_cx(x) for x in setup.mu], "xi": [_cx(x) for x in setup.solution.xi],
            "nu": [list(n) for n in setup.nus], "modules": spec.modules, "height": spec.height,
            "per_height": {str(k): v for k, v in report.per_height.items()}}


def _cmd_kzb(spec):
    an = _analysis(spec)
    setup = _trace_setup(spec, an)
    if not setup.modules:
        raise UsageError("kzb-check needs at least one module")
    ff = vm.normalized_trace(setup)
    pert = _mutation(an) if spec.mutate else None
    checks = []
    for i in range(1, len(setup.modules) + 1):
        rep = vm.kzb_residual(setup, i, ff, perturb=pert)
        checks.append(_check(f"kzb slot {i}", rep.max_residual, spec.tol, **_trace_report(setup, spec, rep)))
    return _checks_report(checks)


def _cmd_second_order(spec):
    an = _analysis(spec)
    setup = _trace_setup(spec, an)
    rep = vm.second_order_residual(setup, vm.normalized_trace(setup))
    return _checks_report([_check("second order", rep.max_residual, spec.tol, **_trace_report(setup, spec, rep))])


def _affine(spec):
    alg = build_simple_lie_algebra(parse_algebra_spec(spec.algebra))
    perm = spec.perm if spec.perm is not None else list(range(alg.rank + 1))
    return el.build_affine_triple(alg, perm)


def _cmd_elliptic_eval(spec):
    at = _affine(spec)
    lam = _lambda_for(spec, at.l_dim, None) if at.l_dim else np.zeros(0, dtype=complex)
    if spec.u is None:
        raise UsageError("--u is required")
    val = el.eval_r_bar_closed(at, lam, spec.u, spec.tau, chi_scale=1.01 if spec.mutate else 1.0)
    return {"affine": at.report(), "basis": list(at.alg.labels), "u": _cx(spec.u), "tau": _cx(spec.tau),
            "pole_distance": val.pole_distance, "tensor": sparse_triples(val.tensor)}, 0


def _cmd_oracle(spec):
    at = _affine(spec)
    rng = np.random.default_rng(spec.seed)
    checks = []
    for k in range(spec.samples):
        lam = el.sample_elliptic_lambda(at, rng)
        u = spec.u if spec.u is not None else el.sample_u(rng, spec.tau, at.g)
        cmp = el.oracle_comparison(at, lam, u, spec.tau, spec.cutoff)
        ratio = cmp["difference"] / max(cmp["tail_bound"], 1e-15)
        checks.append({"name": f"oracle sample {k}", "residual": cmp["difference"], "tol": 10 * max(cmp["tail_bound"], 1e-15),
                       "passed": bool(cmp["ok"]), "ratio_to_bound": ratio, "u": _cx(u), **cmp})
    return _checks_report(checks)


def _cmd_belavin(spec):
    at = _affine(spec)
    rng = np.random.default_rng(spec.seed)
    chi = 1.01 if spec.mutate else 1.0
    dep = cy = 0.0
    for _ in range(spec.samples):
        lam = el.sample_elliptic_lambda(at, rng)
        us = rng.uniform(-0.5, 0.5, 3) + 1j * rng.uniform(-0.3, 0.3, 3)
        dep = max(dep, el.lambda_dependence(at, lam, us[0], spec.tau))
        cy = max(cy, el.cdybe_spectral_residual(at, lam, *us, spec.tau, chi_scale=chi).norm)
    checks = [_check("spectral cdybe", cy, max(spec.tol, 1e-7))]
    if at.dynamical_parameters == 0:
        checks.append(_check("lambda independence", dep, 1e-8, l_dim=at.l_dim))
    checks.append({"name": "orbit count", "passed": bool(el.orbit_count_consistent(at)),
                   "residual": float(abs(at.l_dim - at.dynamical_parameters)), "tol": 0.5})
    rep, code = _checks_report(checks)
    rep["affine"] = at.report()
    return rep, code


def _cmd_suite(spec):
    rep = suite.run_suite(spec.seed, spec.criteria)
    return rep, 0 if rep["passed"] else 2


# raised while reading the job rather than while checking it: exit 1
SETUP_ERRORS = (UsageError, NotFiniteType, UnsupportedRank, AlgebraMismatch, DegenerateTriple, NotBijective,
                NotIsometric, NotAutomorphism)

HANDLERS = {
    "algebra-info": _cmd_algebra_info, "triple-analyze": _cmd_triple_analyze, "r-eval": _cmd_r_eval,
    "cdybe-check": _cmd_cdybe, "delta-b": _cmd_delta_b, "kzb-check": _cmd_kzb,
    "second-order-check": _cmd_second_order, "elliptic-eval": _cmd_elliptic_eval,
    "elliptic-oracle-check": _cmd_oracle, "belavin-check": _cmd_belavin, "suite": _cmd_suite,
}


def run_job(spec: JobSpec) -> tuple[dict, int]:
    try:
        body, code = HANDLERS[spec.command](spec)
    except SETUP_ERRORS:
        raise
    except DrmatError as exc:
        body, code = {"error": {"type": type(exc).__name__, "message": str(exc)}, "passed": False}, 2
    inputs = asdict(spec)
    for key in ("lam",):
        if inputs[key] is not None:
            inputs[key] = [_cx(x) for x in inputs[key]]
    inputs["u"] = None if spec.u is None else _cx(spec.u)
    inputs["tau"] = _cx(spec.tau)
    doc = {"command": spec.command, "inputs": inputs, "seed": spec.seed,
           "provenance": {"version": __version__, "conventions": CONVENTIONS}, **body}
    return doc, code


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        spec, output = parse_job(argv)
        doc, code = run_job(spec)
    except (DrmatError, ValueError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}), file=sys.stderr)
        return 1
    text = json.dumps(doc, indent=2, sort_keys=True, default=str)
    print(text)
    if output:
        Path(output).write_text(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
