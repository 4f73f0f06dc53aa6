import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from ruinlab.model import random_model, tm1

TM1_PATH = Path(__file__).with_name("tm1.json")


@pytest.fixture
def model():
    return tm1()


@pytest.fixture
def tm1_path():
    return TM1_PATH


def models(**kwargs):
    """Hypothesis strategy: random valid models driven by a drawn seed."""
    return st.integers(0, 2**32 - 1).map(lambda s: random_model(np.random.default_rng(s), **kwargs))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
