"""Shared fixtures.

The production envelopes take minutes to build from scratch; they are taken
from the on-disk cache (``$SDIRAND_CACHE`` or ``~/.cache/sdirand``) and built
there on a miss.
"""

import pytest

from sdirand.cache import load_or_build
from sdirand.envelope import Gridding


@pytest.fixture(scope="session")
def production():
    """``(surface, envelope)`` for ``p0 = 1/2`` on the 51 x 51 grid."""
    surface, env, _ = load_or_build(0.5, Gridding.uniform(0.5, 1.0, 51))
    return surface, env


@pytest.fixture(scope="session")
def biased():
    """``(surface, envelope)`` for ``p0 = 0.99`` on the 51 x 51 grid."""
    surface, env, _ = load_or_build(0.99, Gridding.uniform(0.5, 1.0, 51))
    return surface, env


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture
def acceptance(request):
    """``acceptance(k, ok, detail)`` records one criterion line for the summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(k, ok, detail):
        line = f"acceptance {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
