import pytest

CRITERIA = {
    1: "constitutive identities and frame indifference",
    2: "analytic derivatives against central differences",
    3: "step optimality on the reference run",
    4: "exact discrete balances on the reference run",
    5: "energy conservation under refinement",
    6: "a priori uniformity of the monitors",
    7: "brute-force multistart agreement",
    8: "regularity monitor stability",
    9: "weak heat residual trend",
}

_outcomes: dict[int, list[bool]] = {}
_details: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.failed):
        _outcomes.setdefault(n, []).append(report.passed)
        if report.when == "call":
            _details.setdefault(n, []).extend(f"{k}={v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, text in CRITERIA.items():
        if n not in _outcomes:
            tr.write_line(f"criterion {n}: NOT RUN  {text}")
            continue
        status = "PASS" if all(_outcomes[n]) else "FAIL"
        tr.write_line(f"criterion {n}: {status}  {text}")
        for line in _details.get(n, []):
            tr.write_line(f"    {line}")
