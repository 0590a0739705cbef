import numpy as np
import pytest

from brakekit.errors import GridMismatch
from brakekit.loopspace import (
    LoopTangent,
    SymmetricLoop,
    action_differential,
    action_gradient_even,
    find_critical,
    full_gradient_check,
    gradient_norm_w12,
    iterate,
    loop_distance,
    mean_action,
    refine,
    riesz_gradient,
    time_rescale,
    time_rescale_loop,
    w12_inner,
)


def cosine_loop(a=0.1, period=1, n_per_unit=256, center=0.0):
    return SymmetricLoop.from_function(
        lambda t: np.array([center + a * np.cos(2 * np.pi * t / period)]),
        period, n_per_unit=n_per_unit)


def unit_tangent(n_per_unit=256):
    return LoopTangent(1, np.ones((n_per_unit // 2 + 1, 1)))


def test_w12_constant_section():
    xi = unit_tangent()
    assert w12_inner(xi, xi) == pytest.approx(1.0, abs=1e-12)


def test_w12_cosine_value_and_order():
    def at(n):
        ts = np.arange(n // 2 + 1) / n
        return LoopTangent(1, np.cos(2 * np.pi * ts)[:, None])

    exact = 0.5 + (2 * np.pi) ** 2 / 2
    err_c = abs(w12_inner(at(256), at(256)) - exact)
    err_f = abs(w12_inner(at(512), at(512)) - exact)
    assert err_c < 0.01
    assert err_c / err_f >= 3.5


def test_w12_bilinear_and_grid_mismatch():
    xi = unit_tangent()
    rng = np.random.default_rng(0)
    zeta = LoopTangent(1, rng.normal(size=(129, 1)))
    assert w12_inner(LoopTangent(1, 3.0 * xi.half_values), zeta) == pytest.approx(
        3.0 * w12_inner(xi, zeta), abs=1e-14)
    with pytest.raises(GridMismatch):
        w12_inner(xi, LoopTangent(1, np.ones((65, 1))))


def test_mean_action_examples(free_system):
    const = SymmetricLoop.constant([0.4], 1)
    assert mean_action(free_system.L_theta, const) == 0.0
    loop = cosine_loop(0.1)
    exact = np.pi ** 2 * 0.01
    assert mean_action(free_system.L_theta, loop) == pytest.approx(exact, abs=2e-4)
    err_c = abs(mean_action(free_system.L_theta, loop) - exact)
    err_f = abs(mean_action(free_system.L_theta, refine(loop)) - exact)
    assert err_c / err_f >= 3.5


def test_iterate_preserves_mean_action(mild_system):
    loop = cosine_loop(0.07, center=0.3)
    base = mean_action(mild_system.L_theta, loop)
    for k in (1, 2, 3, 4):
        assert abs(mean_action(mild_system.L_theta, iterate(loop, k)) - base) < 1e-12


def test_action_differential_matches_finite_differences(mild_system):
    rng = np.random.default_rng(1)
    h = 1e-7
    for _ in range(50):
        loop = cosine_loop(rng.uniform(0.02, 0.1), center=rng.uniform(0, 1),
                           n_per_unit=64)
        tan = LoopTangent(1, 0.1 * rng.normal(size=(33, 1)))
        d = action_differential(mild_system.L_theta, loop, tan)
        up = mean_action(mild_system.L_theta, loop.with_values(
            loop.half_values + h * tan.half_values))
        dn = mean_action(mild_system.L_theta, loop.with_values(
            loop.half_values - h * tan.half_values))
        assert d == pytest.approx((up - dn) / (2 * h), abs=1e-6)
    # linearity
    d2 = action_differential(mild_system.L_theta, loop,
                             LoopTangent(1, 2.0 * tan.half_values))
    assert d2 == pytest.approx(2.0 * d, abs=1e-14)


def test_differential_vanishes_at_critical_loop(mild_system):
    loop = SymmetricLoop.constant([0.5], 1)
    b = action_gradient_even(mild_system.L_theta, loop)
    assert np.max(np.abs(b)) < 1e-10


def test_riesz_pairing_identity(mild_system):
    loop = cosine_loop(0.07, center=0.3, n_per_unit=128)
    g = riesz_gradient(mild_system.L_theta, loop)
    rng = np.random.default_rng(4)
    for _ in range(5):
        e = np.zeros((65, 1))
        e[rng.integers(0, 65), 0] = 1.0
        et = LoopTangent(1, e)
        lhs = action_differential(mild_system.L_theta, loop, et)
        assert abs(lhs - w12_inner(g, et)) < 1e-10


def test_descent_direction_decreases_action(mild_system):
    loop = cosine_loop(0.07, center=0.3, n_per_unit=128)
    g = riesz_gradient(mild_system.L_theta, loop)
    a0 = mean_action(mild_system.L_theta, loop)
    trial = loop.with_values(loop.half_values - 1e-3 * g.half_values)
    assert mean_action(mild_system.L_theta, trial) < a0


def test_find_critical_examples(mild_system, free_system, stiff_system):
    near_half = cosine_loop(0.02, center=0.45)
    rep = find_critical(mild_system.L_theta, near_half)
    assert rep.converged
    assert np.max(np.abs(rep.loop.half_values - 0.5)) < 1e-8

    wiggly = SymmetricLoop.from_function(
        lambda t: np.array([0.3 + 0.1 * np.cos(2 * np.pi * t)
                            + 0.05 * np.cos(4 * np.pi * t)]), 1)
    repf = find_critical(free_system.L_theta, wiggly)
    assert repf.converged and abs(repf.action) < 1e-12
    assert np.ptp(repf.loop.half_values) < 1e-8


def test_find_critical_agrees_with_shooting(stiff_system, libration):
    from brakekit.dynamics import brake_shoot

    orbit = brake_shoot(stiff_system.H, stiff_system.theta, np.array([0.04]), 2.0)
    fine = find_critical(stiff_system.L_theta, refine(libration), grad_tol=1e-12).loop
    qs = orbit.trajectory.at(fine.full_times())[:, 0]
    assert np.max(np.abs(qs - fine.full_values()[:, 0])) < 1e-5


def test_full_gradient_check(mild_system, stiff_system, libration):
    for loop in (SymmetricLoop.constant([0.0], 1), SymmetricLoop.constant([0.5], 1)):
        assert full_gradient_check(mild_system.L_theta, loop) < 1e-10
    even_norm = gradient_norm_w12(stiff_system.L_theta, libration)
    full_norm = full_gradient_check(stiff_system.L_theta, libration)
    assert full_norm < max(10 * even_norm, 1e-10)


def test_time_rescale(mild_system, stiff_system, libration):
    assert time_rescale(mild_system.L_theta, 1) is mild_system.L_theta
    with pytest.raises(ValueError):
        time_rescale(mild_system.L_theta, 3)
    L2 = time_rescale(stiff_system.L_theta, 2)
    resc = time_rescale_loop(libration, 2)
    assert resc.period == 1
    assert abs(mean_action(L2, resc)
               - mean_action(stiff_system.L_theta, libration)) < 1e-10
    # rescaled constant loops stay critical for the free particle
    from brakekit.systems import load_system

    free = load_system({"dim": 1, "lagrangian": {"builtin": "kinetic_potential"}})
    Lr = time_rescale(free.L_theta, 4)
    const = SymmetricLoop.constant([0.3], 1)
    assert np.max(np.abs(action_gradient_even(Lr, const))) < 1e-14
    assert mean_action(Lr, const) == 0.0


def test_loop_distance_shift_invariance(libration):
    shifted = libration.shifted_half_period()
    assert loop_distance(libration, shifted) < 1e-10
    other = libration.with_values(libration.half_values + 0.01)
    assert loop_distance(libration, other) > 1e-3


def test_evenness_is_structural(libration):
    full = libration.full_values()
    assert np.max(np.abs(full[1:] - full[1:][::-1])) == 0.0
    it = iterate(libration, 3)
    full3 = it.full_values()
    assert np.max(np.abs(full3[1:] - full3[1:][::-1])) == 0.0
