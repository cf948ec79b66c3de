import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "passed": 0, "failed": [], "worst": {}})
    if report.failed:
        entry["failed"].append(item.name)
    elif report.when == "call" and report.passed:
        entry["passed"] += 1
    if report.when == "call":
        # metrics are reported as the worst (largest) value over all tests of the criterion
        for name, value in item.user_properties:
            worst = entry["worst"]
            worst[name] = max(worst.get(name, value), value)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "FAIL" if entry["failed"] or not entry["passed"] else "PASS"
        detail = ", ".join(f"{k} {v:.3g}" for k, v in entry["worst"].items())
        line = f"C{number:<2d} {status}  {entry['title']}"
        if detail:
            line += f"  [{detail}]"
        if entry["failed"]:
            line += f"  failing: {', '.join(entry['failed'])}"
        tr.write_line(line)
