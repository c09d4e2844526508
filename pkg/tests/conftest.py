import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bucketsynth.anon import AnonParams
from bucketsynth.schema import Kind, make_table

settings.register_profile(
    "repo", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def correlated_table(n=2000, seed=0, pid_per=1):
    """Two correlated real columns; ``pid_per`` rows per protected entity."""
    rng = np.random.default_rng(seed)
    a = np.round(rng.normal(50, 10, n), 3)
    b = np.round(0.6 * a + rng.normal(0, 5, n), 3)
    if pid_per == 1:
        return make_table(["a", "b"], [Kind.REAL, Kind.REAL], zip(a.tolist(), b.tolist()))
    pid = (np.arange(n) // pid_per).tolist()
    return make_table(
        ["pid", "a", "b"], [Kind.INTEGER, Kind.REAL, Kind.REAL], zip(pid, a.tolist(), b.tolist()), pid_columns=["pid"]
    )


@pytest.fixture
def small_table():
    return correlated_table(1500, seed=3)


@pytest.fixture
def params():
    return AnonParams(salt=b"test-salt")


# ---------------------------------------------------------------- acceptance reporting

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    marks = getattr(report, "criterion", None)
    if marks is None:
        return
    number, title = marks
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "notes": []})
    if report.failed:
        entry["ok"] = False
        entry["notes"].append(report.head_line or report.nodeid)
    for name, text in report.user_properties:
        if name == "detail" and text not in entry["notes"]:
            entry["notes"].append(text)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = tuple(mark.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] else "FAIL"
        notes = "; ".join(entry["notes"])
        terminalreporter.write_line(f"criterion {number}: {status}  {entry['title']}" + (f"  [{notes}]" if notes else ""))
