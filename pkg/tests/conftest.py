"""Collects the outcome of every acceptance criterion and prints a
one-line verdict per criterion at the end of the run."""
import pytest

_verdicts = {}


def _criterion(item):
    m = item.get_closest_marker("criterion")
    return None if m is None else (m.args[0], m.args[1])


def pytest_runtest_makereport(item, call):
    crit = _criterion(item)
    if crit is None:
        return
    note = getattr(item, "acceptance_note", "")
    if call.when == "call" or call.excinfo is not None:
        ok = call.excinfo is None
        prev = _verdicts.get(crit)
        _verdicts[crit] = (ok and (prev is None or prev[0]), note or (prev[1] if prev else ""))


@pytest.fixture
def note(request):
    """Attach a short remark to the criterion line of the running test."""
    def add(text):
        request.node.acceptance_note = text
    return add


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (num, title), (ok, note) in sorted(_verdicts.items()):
        line = f"C{num:<2} {'PASS' if ok else 'FAIL'}  {title}"
        tr.write_line(line + (f"  [{note}]" if note else ""))
