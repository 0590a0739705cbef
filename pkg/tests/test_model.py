import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brakekit.model import (
    OneForm,
    PhasePoint,
    TorusSpace,
    check_symmetry,
    fixed_set_point,
    involution_R1,
    magnetic_lagrangian,
    momentum_shift,
    tonelli_certificate,
)
from brakekit.systems import (
    kinetic_hamiltonian,
    kinetic_potential_lagrangian,
    load_system,
    one_form_from_expressions,
)


def const_form(value=0.3):
    return OneForm.constant(TorusSpace(1), [value])


def test_r1_reduces_to_r0_without_theta(torus1):
    theta = OneForm.zero(torus1)
    x = PhasePoint([0.2], [0.5], torus1)
    out = involution_R1(theta, x)
    assert np.allclose(out.q, [0.2]) and np.allclose(out.p, [-0.5])


def test_r1_constant_form_value(torus1):
    out = involution_R1(const_form(), PhasePoint([0.2], [0.1], torus1))
    assert np.allclose(out.p, [-0.7])


@settings(max_examples=100, deadline=None)
@given(q=st.floats(0, 1), p=st.floats(-5, 5), c=st.floats(-1, 1))
def test_r1_is_involution(q, p, c):
    torus = TorusSpace(1)
    theta = OneForm.constant(torus, [c])
    x = PhasePoint([q], [p], torus)
    twice = involution_R1(theta, involution_R1(theta, x))
    assert abs(float(twice.p[0]) - p) < 1e-14
    assert torus.distance(twice.q, x.q) < 1e-14


def test_momentum_shift_identity_and_value(torus1):
    x = PhasePoint([0.2], [0.1], torus1)
    zero = OneForm.zero(torus1)
    assert np.allclose(momentum_shift(zero, x).p, x.p)
    assert np.allclose(momentum_shift(const_form(), x, "forward").p, [-0.2])
    back = momentum_shift(const_form(), momentum_shift(const_form(), x), "inverse")
    assert np.allclose(back.p, x.p)


def test_phi_conjugates_involutions(torus1):
    # R1 = Phi o R0 o Phi^{-1}; verified pointwise on random samples
    rng = np.random.default_rng(0)
    theta = const_form()
    for _ in range(100):
        x = PhasePoint(rng.uniform(0, 1, 1), rng.normal(size=1), torus1)
        r0 = PhasePoint(x.q, -x.p, torus1)
        lhs = momentum_shift(
            theta,
            PhasePoint(*(lambda y: (y.q, -y.p))(momentum_shift(theta, x, "inverse")),
                       torus1),
            "forward")
        rhs = involution_R1(theta, x)
        assert np.max(np.abs(lhs.p - rhs.p)) < 1e-14


def test_fixed_set_point(torus1):
    zero = OneForm.zero(torus1)
    assert np.allclose(fixed_set_point(zero, [0.7]).p, [0.0])
    assert np.allclose(fixed_set_point(const_form(), [0.4]).p, [-0.3])
    rng = np.random.default_rng(1)
    theta = const_form(0.17)
    for _ in range(100):
        x = fixed_set_point(theta, rng.uniform(0, 1, 1))
        moved = involution_R1(theta, x)
        assert np.max(np.abs(moved.p - x.p)) < 1e-14


def test_magnetic_lagrangian_values(torus1):
    L = kinetic_potential_lagrangian(torus1)
    zero = OneForm.zero(torus1)
    L0 = magnetic_lagrangian(L, zero)
    assert float(L0.value(0.0, np.array([0.3]), np.array([1.2]))) == pytest.approx(0.72)
    Lth = magnetic_lagrangian(L, const_form())
    assert float(Lth.value(0.0, np.array([0.1]), np.array([2.0]))) == pytest.approx(2.6)
    # fiber Hessian untouched
    hv = Lth.hess_vv(0.0, np.array([0.1]), np.array([2.0]))
    assert np.allclose(hv, [[1.0]])


def test_magnetic_pair_reversibility(mild_system):
    # (L + theta[v]) is time reversible when L is the dual of the R1-symmetric H
    assert check_symmetry(mild_system.L, mild_system.theta, 256) < 1e-14


def test_check_symmetry_hamiltonians(torus1, stiff_system):
    H = kinetic_hamiltonian(torus1)
    assert check_symmetry(H, OneForm.zero(torus1), 256) == 0.0
    # H = |p + theta|^2/2 is R1 symmetric
    assert check_symmetry(stiff_system.H, stiff_system.theta, 256) < 1e-13

    # H = p^3 breaks R0 symmetry on a fixed grid by a visible margin
    def value(t, q, p):
        p = np.asarray(p, dtype=float)
        return p[..., 0] ** 3

    from brakekit.model import HamiltonianSpec

    odd = HamiltonianSpec(torus1, value, None, None, None, None, None)
    assert check_symmetry(odd, OneForm.zero(torus1), 1000) > 0.1


def test_one_form_periodicity_and_sigma():
    torus = TorusSpace(2)
    theta = one_form_from_expressions(torus, ["0", "sin(2*pi*q1)/(2*pi)"])
    assert theta.periodicity_violation() < 1e-12
    q = np.array([0.2, 0.7])
    sig = theta.sigma(q)
    assert np.allclose(sig, -sig.T)
    # sigma[j, i] = d_j theta_i - d_i theta_j
    assert sig[0, 1] == pytest.approx(np.cos(2 * np.pi * 0.2))
    with pytest.raises(Exception):
        one_form_from_expressions(torus, ["q1", "0"])  # not lattice periodic


def test_lattice_periodic_evaluations(stiff_system):
    rng = np.random.default_rng(3)
    q = rng.uniform(0, 1, (64, 1))
    v = rng.normal(size=(64, 1))
    t = rng.uniform(0, 1, 64)
    L = stiff_system.L_theta
    assert np.max(np.abs(L.value(t, q + 1.0, v) - L.value(t, q, v))) < 1e-12


def test_tonelli_certificates(free_system, quartic_system):
    for system in (free_system, quartic_system):
        cert = tonelli_certificate(system.L_theta)
        assert cert["positive_definite"] and cert["superlinear_on_ladder"]


def test_load_system_validates():
    with pytest.raises(ValueError):
        load_system({"dim": 1, "lagrangian": {"builtin": "nope"}})
    with pytest.raises(ValueError):
        load_system({"dim": 1, "theta": ["q1 + oops"],
                     "lagrangian": {"builtin": "kinetic_potential"}})
