"""One test per acceptance criterion; each prints a pass/fail line in the summary."""

import time

import pytest

import conftest
import propchecks
from knapsack_contracts.experiments import run_preset

PRESET_BY_CRITERION = {
    1: ("skc-bound", 60),
    2: ("adapt-le-2phi", 60),
    3: ("alpha-gap", 120),
    4: ("fully-vs-stop", 300),
    5: ("info-gap", 60),
    6: ("skc-bound-delta", 60),
    7: ("overflow-9approx", 120),
    8: ("ordered-dp", 120),
    9: ("lp-gap", 60),
    10: ("reduction-equiv", 60),
    11: ("bounded-gap", 60),
}


def _record(criterion, name, ok, detail):
    conftest.ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {name} ({detail})")


@pytest.mark.parametrize("criterion", sorted(PRESET_BY_CRITERION))
def test_criterion(criterion):
    name, limit = PRESET_BY_CRITERION[criterion]
    report = run_preset(name, workers=1)
    failed = [r for r in report.rows if not r.passed]
    in_time = report.seconds <= limit
    detail = f"{len(report.rows) - len(failed)}/{len(report.rows)} rows, {report.seconds:.1f}s of {limit}s"
    if failed:
        r = failed[0]
        detail += f"; first failure: {r.quantity} = {r.value} vs {r.relation} {r.bound} at {r.params}"
    _record(criterion, name, not failed and in_time, detail)
    assert in_time, detail
    assert not failed, detail


def test_criterion_12_property_suites():
    t0 = time.perf_counter()
    results = propchecks.run_all(range(100))
    bad = {k: v for k, v in results.items() if v}
    secs = time.perf_counter() - t0
    detail = f"{len(results)} suites x 100 seeds, {secs:.1f}s"
    if bad:
        detail += "; " + "; ".join(f"{k}: {v[0]}" for k, v in bad.items())
    _record(12, "property-suites", not bad, detail)
    assert not bad, detail
