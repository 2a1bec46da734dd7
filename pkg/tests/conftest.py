"""Shared test plumbing: acceptance-criterion result collection.

Acceptance tests register one line per criterion through the `criterion`
context manager; the summary is printed at the end of the pytest run so each
criterion shows up as an explicit PASS/FAIL line in the terminal output.
"""

from contextlib import contextmanager

_RESULTS: dict[str, tuple[bool, str]] = {}


@contextmanager
def criterion(name: str):
    """Record a pass/fail line for one acceptance criterion."""
    detail: list[str] = []
    try:
        yield detail.append
    except BaseException as exc:
        _RESULTS[name] = (False, str(exc).splitlines()[0] if str(exc) else type(exc).__name__)
        raise
    _RESULTS[name] = (True, "; ".join(detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in _RESULTS.items():
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)
