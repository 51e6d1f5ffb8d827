"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

import pytest

CRITERIA = {
    1: "published-data integration (optional)",
    2: "desk-scale synthetic segmentation",
    3: "finite-difference gradients",
    4: "oracle equivalence",
    5: "normalization",
    6: "superpoints",
    7: "region update identities",
    8: "metrics hand check",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion this test decides")
    config.acceptance_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        return
    if rep.skipped:
        state = "SKIP"
        detail = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
        detail = detail.removeprefix("Skipped: ")
    else:
        state = "PASS" if rep.passed else "FAIL"
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    item.config.acceptance_results.setdefault(marker.args[0], []).append((state, detail))


def pytest_terminal_summary(terminalreporter, config):
    results = config.acceptance_results
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in results:
            continue
        states = [s for s, _ in results[n]]
        if "FAIL" in states:
            overall = "FAIL"
        elif all(s == "SKIP" for s in states):
            overall = "SKIP"
        else:
            overall = "PASS"
        details = "; ".join(d for _, d in results[n] if d)
        terminalreporter.write_line(f"criterion {n} [{CRITERIA[n]}]: {overall}"
                                    + (f" ({details})" if details else ""))
