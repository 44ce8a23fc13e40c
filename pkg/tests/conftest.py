from __future__ import annotations

import pytest

from helpers import fixture_config, mock_providers, world_snapshot
from kgrag.pipeline import Engine


@pytest.fixture
def providers():
    return mock_providers()


@pytest.fixture
def world(providers):
    """(dataset, snapshot) for the hand-written fixture world."""
    return world_snapshot(providers)


@pytest.fixture
def engine(world, providers):
    _, snapshot = world
    return Engine(fixture_config(), providers, snapshot)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
