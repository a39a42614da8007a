import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridbench import caseio, opf, powerflow


@pytest.fixture(scope="session")
def case14():
    return caseio.load_builtin("case14")


@pytest.fixture(scope="session")
def case30():
    return caseio.load_builtin("case30")


@pytest.fixture(scope="session")
def case57():
    return caseio.load_builtin("case57")


@pytest.fixture(scope="session")
def case118():
    return caseio.load_builtin("case118")


@pytest.fixture(scope="session")
def case14_pf(case14):
    return powerflow.solve_powerflow(case14)


@pytest.fixture(scope="session")
def case14_opf(case14):
    return opf.solve_acopf(case14)


@pytest.fixture(scope="session")
def case30_opf(case30):
    return opf.solve_acopf(case30)


@pytest.fixture(scope="session")
def case57_opf(case57):
    return opf.solve_acopf(case57)


@pytest.fixture(scope="session")
def case118_opf(case118):
    return opf.solve_acopf(case118)


@pytest.fixture(scope="session")
def case118_base(case118, case118_opf):
    """Base network and power flow for contingency work: the optimal dispatch."""
    dnet = opf.apply_dispatch(case118, case118_opf)
    pf = powerflow.solve_powerflow(dnet, enforce_q_limits=False)
    return dnet, pf
