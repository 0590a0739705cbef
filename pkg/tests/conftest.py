import numpy as np
import pytest

from brakekit.loopspace import SymmetricLoop, find_critical
from brakekit.model import TorusSpace
from brakekit.systems import (
    kinetic_hamiltonian,
    load_system,
    one_form_from_expressions,
)

MILD = "cos(2*pi*q1)/(4*pi**2)"
STIFF = "cos(2*pi*q1)"


@pytest.fixture(scope="session")
def torus1():
    return TorusSpace(1)


@pytest.fixture(scope="session")
def free_system():
    return load_system({"dim": 1, "lagrangian": {"builtin": "kinetic_potential"}})


@pytest.fixture(scope="session")
def mild_system():
    return load_system({
        "dim": 1, "theta": ["0.3"],
        "lagrangian": {"builtin": "kinetic_potential", "potential": MILD},
    })


@pytest.fixture(scope="session")
def stiff_system():
    return load_system({
        "dim": 1, "theta": ["0.3"],
        "lagrangian": {"builtin": "kinetic_potential", "potential": STIFF},
    })


@pytest.fixture(scope="session")
def quartic_system():
    return load_system({"dim": 1, "lagrangian": {"builtin": "quartic_kinetic"}})


@pytest.fixture(scope="session")
def t2_magnetic():
    torus = TorusSpace(2)
    H = kinetic_hamiltonian(torus)
    theta = one_form_from_expressions(torus, ["0", "sin(2*pi*q1)/(2*pi)"])
    return torus, H, theta


@pytest.fixture(scope="session")
def libration(stiff_system):
    """The tau = 2 nonconstant brake orbit of the stiff magnetic pendulum."""
    seed = SymmetricLoop.from_function(
        lambda t: np.array([0.5 - 0.45 * np.cos(np.pi * t)]), 2)
    rep = find_critical(stiff_system.L_theta, seed, grad_tol=1e-12)
    assert rep.converged
    return rep.loop
