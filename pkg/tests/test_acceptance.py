"""Acceptance bank: one PASS/FAIL line per criterion, with its time bound.

Run with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""
import sys

import pytest

from drmat.suite import CRITERIA, run_criterion

SEED = 0


def _line(k: int, results, secs: float) -> tuple[bool, str]:
    title, _, bound = CRITERIA[k]
    ok_checks = all(r.passed for r in results)
    ok = ok_checks and secs < bound
    worst = max(results, key=lambda r: r.residual / r.tol if r.sense == "below" else r.tol / max(r.residual, 1e-300))
    rel = "<" if worst.sense == "below" else ">"
    failing = [r.name for r in results if not r.passed]
    msg = (f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {title}: {len(results)} checks, "
           f"tightest {worst.name!r} residual {worst.residual:.3e} {rel} {worst.tol:.0e}; "
           f"{secs:.2f} s < {bound:g} s")
    if failing:
        msg += f"; failing: {failing}"
    if secs >= bound:
        msg += "; time bound exceeded"
    return ok, msg


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, capsys):
    results, secs = run_criterion(k, SEED)
    ok, msg = _line(k, results, secs)
    with capsys.disabled():
        print("\n" + msg)
    assert ok, msg


if __name__ == "__main__":
    all_ok = True
    for k in sorted(CRITERIA):
        ok, msg = _line(k, *run_criterion(k, SEED))
        all_ok &= ok
        print(msg)
    sys.exit(0 if all_ok else 1)
