"""Shared fixtures.  Expensive model solves are cached once per session."""

import numpy as np
import pytest

from cuspwave import Cell, ChargeConfig, SolverOptions
from cuspwave.study import convergence_study

STUDY_CUTOFFS = (8, 12, 16, 20, 24, 32)
M_REF = 48
TIGHT = SolverOptions(residual_tol=1e-9)


def model_config(R=0.7, Z=2.0, L=2.0):
    """Two equal charges at +-R/2 along the first axis."""
    cell = Cell(L)
    return ChargeConfig(cell, ((Z, (R / 2, 0.0, 0.0)), (Z, (-R / 2, 0.0, 0.0))))


@pytest.fixture
def cell2():
    return Cell(2.0)


@pytest.fixture
def model():
    return model_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def model_study():
    return convergence_study(model_config(0.7), STUDY_CUTOFFS, "cubic", options=TIGHT, M_ref=M_REF)


@pytest.fixture(scope="session")
def partner_study():
    return convergence_study(model_config(0.75), STUDY_CUTOFFS, "cubic", options=TIGHT, M_ref=M_REF)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
