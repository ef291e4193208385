import pytest

from bitmeter.formats import BUILTIN_FORMATS


@pytest.fixture
def int8():
    return BUILTIN_FORMATS["int8"]


@pytest.fixture
def int16():
    return BUILTIN_FORMATS["int16"]


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = rep.nodeid.rsplit("::", 1)[-1]
            if "test_acceptance" not in rep.nodeid or not name.startswith("test_criterion_"):
                continue
            ok = results.get(name, True) and outcome == "passed"
            results[name] = ok
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results, key=lambda n: int(n.split("_")[2])):
        number, _, topic = name[len("test_criterion_"):].partition("_")
        terminalreporter.write_line(f"{'PASS' if results[name] else 'FAIL'} criterion {number}: {topic.replace('_', ' ')}")
