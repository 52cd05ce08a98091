import json

import pytest

from drmat.cli import main, parse_job
from drmat.errors import UsageError

SWAP = {"gamma1": [1, 2], "gamma2": [1, 2], "map": {"1": "2", "2": "1"}}


@pytest.fixture
def swap_file(tmp_path):
    p = tmp_path / "swap.json"
    p.write_text(json.dumps(SWAP))
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, (json.loads(out.out) if out.out.strip() else None), out.err


def test_defaults(swap_file, monkeypatch):
    monkeypatch.delenv("DRMAT_SEED", raising=False)
    spec, _ = parse_job(["cdybe-check", "--algebra", "A2", "--triple", swap_file])
    assert (spec.samples, spec.seed, spec.tol) == (20, 0, 1e-9)


def test_missing_algebra(capsys):
    with pytest.raises(UsageError, match="--algebra"):
        parse_job(["cdybe-check"])
    code, _, err = run(capsys, "cdybe-check")
    assert code == 1 and "--algebra" in err


def test_unknown_flag_is_usage_error(capsys):
    code, _, _ = run(capsys, "cdybe-check", "--algebra", "A2", "--bogus")
    assert code == 1


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"height": 4, "samples": 3}))
    spec, _ = parse_job(["kzb-check", "--algebra", "A1", "--config", str(cfg)])
    assert spec.height == 4 and spec.samples == 3
    spec, _ = parse_job(["kzb-check", "--algebra", "A1", "--config", str(cfg), "--height", "3"])
    assert spec.height == 3


def test_seed_environment_fallback(monkeypatch):
    monkeypatch.setenv("DRMAT_SEED", "17")
    assert parse_job(["cdybe-check", "--algebra", "A1"])[0].seed == 17
    assert parse_job(["cdybe-check", "--algebra", "A1", "--seed", "2"])[0].seed == 2


def test_cdybe_check_and_mutation(capsys, swap_file):
    code, doc, _ = run(capsys, "cdybe-check", "--algebra", "A2", "--triple", swap_file, "--samples", "5", "--seed", "7")
    assert code == 0 and doc["passed"] and doc["seed"] == 7
    assert set(doc["provenance"]["conventions"]) == {"structure_constants", "wedge", "oracle_exponent"}
    code, doc, _ = run(capsys, "cdybe-check", "--algebra", "A2", "--triple", swap_file, "--samples", "3", "--mutate")
    assert code == 2 and not doc["passed"]


def test_r_eval_triples(capsys, swap_file):
    code, doc, _ = run(capsys, "r-eval", "--algebra", "A2", "--triple", swap_file, "--lambda", "0.7")
    assert code == 0
    assert all(len(t) == 4 and isinstance(t[0], int) and isinstance(t[1], int) for t in doc["tensor"])
    labels = doc["basis"]
    cartan = [t for t in doc["tensor"] if labels[t[0]].startswith("h") and labels[t[1]].startswith("h")]
    assert cartan


def test_bad_triple_file(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    code, _, err = run(capsys, "r-eval", "--algebra", "A2", "--triple", str(p), "--lambda", "0.7")
    assert code == 1 and "BadTripleFile" in err


def test_invalid_triple_is_setup_error(capsys):
    bad = json.dumps({"gamma1": [1], "gamma2": [2], "map": {"1": "2"}})
    code, _, err = run(capsys, "triple-analyze", "--algebra", "B2", "--triple", bad)
    assert code == 1 and "NotIsometric" in err


def test_determinism(capsys, swap_file):
    argv = ["kzb-check", "--algebra", "A2", "--triple", swap_file, "--modules", "adjoint", "--height", "3", "--seed", "11"]
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    assert capsys.readouterr().out == first


def test_kzb_and_second_order(capsys, swap_file):
    code, doc, _ = run(capsys, "kzb-check", "--algebra", "A2", "--triple", swap_file, "--modules", "adjoint,adjoint",
                       "--weights", "[[1,0],[0,-1]]")
    assert code == 0 and "mu" in doc["checks"][0]
    code, _, _ = run(capsys, "kzb-check", "--algebra", "A2", "--triple", swap_file, "--modules", "adjoint,adjoint",
                     "--weights", "[[1,0],[0,-1]]", "--mutate")
    assert code == 2
    code, _, _ = run(capsys, "second-order-check", "--algebra", "A1", "--modules", "adjoint")
    assert code == 0


def test_delta_b(capsys, swap_file):
    code, doc, _ = run(capsys, "delta-b", "--algebra", "A2", "--triple", swap_file, "--mode", "both", "--height", "4")
    assert code == 0 and doc["checks"][0]["name"] == "reciprocity"


def test_elliptic_commands(capsys):
    code, doc, _ = run(capsys, "elliptic-eval", "--algebra", "A1", "--affine-rotation", "1", "--tau", "0.8i", "--u", "0.1-0.4i")
    assert code == 0 and doc["affine"]["l_dim"] == 0 and doc["tensor"]
    code, doc, _ = run(capsys, "belavin-check", "--algebra", "A2", "--affine-rotation", "1", "--samples", "2")
    assert code == 0
    code, _, _ = run(capsys, "belavin-check", "--algebra", "A1", "--samples", "1", "--mutate")
    assert code == 2
    code, doc, _ = run(capsys, "elliptic-oracle-check", "--algebra", "A1", "--cutoff", "40", "--samples", "2")
    assert code == 0
    code, _, _ = run(capsys, "elliptic-eval", "--algebra", "A1", "--u", "0.1", "--tau", "-1i")
    assert code == 1


def test_suite(capsys):
    code, doc, _ = run(capsys, "suite")
    assert code == 0 and doc["passed"]
    assert len(doc["checks"]) >= 30
    assert set(doc["criteria"]) == {str(k) for k in range(1, 14)}
