"""Collects the acceptance verdict lines and repeats them at the end of the run."""

import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict(request):
    """Call ``verdict(ok, detail)`` once per criterion; prints and records a PASS/FAIL line."""
    capman = request.config.pluginmanager.getplugin("capturemanager")
    label = request.node.get_closest_marker("criterion").args[0]

    def emit(ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}"
        _VERDICTS.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
