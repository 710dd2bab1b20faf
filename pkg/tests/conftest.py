import numpy as np
import pytest

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    _CRITERIA[props["criterion"]] = (props.get("title", ""), report.outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {number:>2} {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def criterion(request, record_property):
    """Tag a test with its acceptance criterion; returns a detail recorder."""
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    record_property("criterion", number)
    record_property("title", title)
    details = []

    def note(text):
        details.append(str(text))
        for i, (k, _) in enumerate(request.node.user_properties):
            if k == "detail":
                request.node.user_properties.pop(i)
                break
        record_property("detail", "; ".join(details))

    return note


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
