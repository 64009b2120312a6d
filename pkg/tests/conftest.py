import json
from importlib import resources

import numpy as np
import pytest

from toptail.estimation import RatingSample, fit_full
from toptail.model import ThresholdModel, sample

MEN = ThresholdModel(0.689, 209.28, 2100.0)
WOMEN = ThresholdModel(0.612, 194.86, 2100.0)
N_MEN, N_WOMEN = 14671, 753

# criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def men_sample():
    return RatingSample("sex=M", 2100.0, sample(MEN, N_MEN, seed=20260107))


@pytest.fixture(scope="session")
def women_sample():
    return RatingSample("sex=W", 2100.0, sample(WOMEN, N_WOMEN, seed=20260108))


@pytest.fixture(scope="session")
def men_fit(men_sample):
    return fit_full(men_sample)


@pytest.fixture(scope="session")
def women_fit(women_sample):
    return fit_full(women_sample)


@pytest.fixture(scope="session")
def schema():
    def load(name):
        text = resources.files("toptail").joinpath("schemas", f"{name}.schema.json").read_text()
        return json.loads(text)

    return load


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: (int("".join(ch for ch in c if ch.isdigit()) or 0), c)):
        status, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{status:<5} criterion {cid}: {detail}")
