import functools
import os
import sys

import pytest

from panoreduce.scene import render_fixture

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@functools.lru_cache(maxsize=None)
def cached_fixture(name, width=1024, height=512, noise_sigma=0.0, noise_seed=0):
    """Rendered fixtures are pure functions of their arguments, so share them across tests."""
    return render_fixture(name, width, height, noise_sigma=noise_sigma, noise_seed=noise_seed)


@pytest.fixture
def fixture_scene():
    return cached_fixture


@pytest.fixture
def python():
    return sys.executable


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
