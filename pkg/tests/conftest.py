from collections import defaultdict

import pytest

_CRITERIA = {
    1: "mixed intersection counterexample sets",
    2: "mixed union counterexample sets",
    3: "FDR example: bh(0.05) and topk(3) intersection",
    4: "decreasing-rank threshold witnesses",
    5: "closed form matches output level (10k samples each)",
    6: "property suites on built-ins and guaranteed compositions",
    7: "negative suites find violations",
    8: "DSL round trip and parser fuzz",
}

_outcomes = defaultdict(list)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = report.user_properties and dict(report.user_properties).get("acceptance")
    if marker:
        _outcomes[marker].append((report.nodeid, report.passed))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        item.user_properties.append(("acceptance", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, label in _CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            tr.write_line(f"criterion {n}: NOT RUN  {label}")
            continue
        failed = [nodeid.split("::")[-1] for nodeid, ok in results if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {n}: {status}  {label} ({len(results) - len(failed)}/{len(results)} checks)"
        if failed:
            line += "; failing: " + ", ".join(failed)
        tr.write_line(line)
