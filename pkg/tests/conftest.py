import numpy as np
import pytest

from zshash.hashing import HashCodeSet


def codes_from_strings(strings):
    """'0101'-style bit strings (1 = +1) to a HashCodeSet."""
    signs = np.array([[1 if ch == "1" else -1 for ch in s] for s in strings])
    return HashCodeSet.from_signs(signs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- acceptance report: one pass/fail line per criterion

_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome.upper(), report.duration, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration, detail in _ACCEPTANCE:
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  ({duration:.2f} s)  {detail}")
