"""One test per acceptance criterion; each prints a PASS/FAIL line."""
import json

import pytest

from qdsps import validation
from qdsps.cli import run
from qdsps.config import Scenario

# seconds; criteria without a stated budget are given a generous one
BUDGET = {1: 1.0, 2: 1.0, 3: 1.0, 4: 30.0, 5: 120.0, 6: 60.0, 7: 120.0, 8: 60.0}


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    results = validation.run_checks(Scenario.load(), out, threads=4)
    return {r.cid: r for r in results}, out


def _report(capsys, line):
    with capsys.disabled():
        print("\n" + line)


@pytest.mark.parametrize("cid", sorted(BUDGET))
def test_criterion(suite, capsys, cid):
    r = suite[0][cid]
    _report(capsys, r.line() + f"  ({r.runtime_s:.2f} s)")
    assert r.passed, r.details
    assert r.runtime_s < BUDGET[cid]


def test_criterion_2_flags_quoted_value(suite):
    r = suite[0][2]
    assert r.flags and "0.65" in r.flags[0]


def test_criterion_9_reproducible_outputs(suite, tmp_path, capsys):
    first = suite[1]
    out = tmp_path / "check"
    status = run(["paper-check", "--out", str(out), "--threads", "2"])
    rows = json.loads((out / "acceptance.json").read_text())["results"]
    names = sorted(p.name for p in first.iterdir())
    same, diffs = validation.compare_outputs(first, out, names)
    line = f"[{'PASS' if same else 'FAIL'}] 9. reproducibility: " + (
        f"{len(names)} data files byte-identical across runs and thread counts" if same
        else f"differs: {diffs}")
    _report(capsys, line)
    assert same
    assert status == 0
    assert [r["id"] for r in rows] == list(range(1, 10))
    assert all(r["passed"] for r in rows)
