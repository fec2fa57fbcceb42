from dataclasses import replace

import pytest

from promosim.config import MarketConfig

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def small_config():
    return replace(MarketConfig(name="small"), n_customers=400, T=36)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
