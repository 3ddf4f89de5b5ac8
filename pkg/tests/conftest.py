import pytest

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): exit criterion, reported in the summary")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    label = report.user_properties and dict(report.user_properties).get("acceptance")
    if label:
        _ACCEPTANCE.append((label, "PASS" if report.passed else "FAIL"))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker and ("acceptance", marker.args[0]) not in item.user_properties:
        item.user_properties.append(("acceptance", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, verdict in sorted(_ACCEPTANCE, key=lambda x: int(x[0].split()[0][1:])):
        terminalreporter.write_line(f"{verdict}  {label}")
