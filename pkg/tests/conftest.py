"""Collects acceptance-criterion outcomes and prints one line per criterion at the end of the run."""
import pytest

_RESULTS = {}


class Criterion:
    """Accumulates the sub-checks of one acceptance criterion."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.checks = []

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append((name, bool(passed), detail))
        return bool(passed)

    def verify(self) -> None:
        failed = [f"{n}: {d}" for n, ok, d in self.checks if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    crit = Criterion(*marker.args)
    request.node._criterion = crit
    return crit


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    crit = getattr(item, "_criterion", None)
    if crit is None or report.when != "call":
        return
    _RESULTS[crit.number] = (crit, report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        crit, passed = _RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {crit.title}")
        for name, ok, detail in crit.checks:
            terminalreporter.write_line(f"    {'ok  ' if ok else 'FAIL'} {name}: {detail}")
