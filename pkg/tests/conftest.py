import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bdrnilm.network import NetworkConfig  # noqa: E402


@pytest.fixture
def tiny_config():
    """Two blocks with a projected shortcut, small enough for finite differences."""
    return NetworkConfig(window_length=15, first_filters=3, filters=4, n_blocks=2, dropout_rate=0.1)


@pytest.fixture
def small_config():
    return NetworkConfig(window_length=99, first_filters=8, filters=8, n_blocks=2, dropout_rate=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
