import pytest

# criterion -> [(test name, outcome, measured values)]
_CRITERIA: dict[str, list[tuple[str, str, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        notes = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        outcome = report.outcome
        if hasattr(report, "wasxfail"):
            outcome = "xfail" if report.skipped else "passed"
        _CRITERIA.setdefault(str(marker.args[0]), []).append((item.name, outcome, notes))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")

    def order(key: str):
        return (int(key.rstrip("abcdefgh")), key)

    for key in sorted(_CRITERIA, key=order):
        results = _CRITERIA[key]
        ok = all(o == "passed" for _, o, _ in results)
        failed = ", ".join(f"{n} {o}" for n, o, _ in results if o != "passed")
        notes = "; ".join(d for _, _, d in results if d)
        line = f"criterion {key}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += f" [{failed}]"
        if notes:
            line += f" ({notes})"
        terminalreporter.write_line(line)
