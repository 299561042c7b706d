import sys

import pytest

from irt_forge import registry

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture(autouse=True)
def isolated_registry():
    """Undo registrations (and forget plugin imports) made by a test."""
    before = set(registry.names())
    modules = set(sys.modules)
    yield
    for name in set(registry.names()) - before:
        registry.unregister(name)
    for name in set(sys.modules) - modules:
        if name.endswith("_plugin"):
            del sys.modules[name]


@pytest.fixture
def criterion(request):
    """Record one acceptance line and fail the test if the criterion is not met."""

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
        request.config.stash[ACCEPTANCE].append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
