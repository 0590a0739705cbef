"""Twisted Hamiltonian and Euler-Lagrange vector fields, integration, shooting.

Phase trajectories are integrated in lifted coordinates (q unwrapped in R^N);
all specs are lattice-periodic so this is harmless and keeps interpolation
smooth.  The twisted field on (T*M, omega0 - pi* d theta) reads

    qdot = H_p,   pdot_j = -H_q_j + sum_i sigma_ji qdot_i,
    sigma_ji = d theta_i / d q_j - d theta_j / d q_i,

the sign convention being pinned by the momentum-shift conjugacy test.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BlowUp, NonConvergence, SingularMass, SymmetryViolation
from .model import HamiltonianSpec, LagrangianSpec, OneForm, PhasePoint
from .systems import shifted_hamiltonian

__all__ = [
    "twisted_field",
    "el_field",
    "integrate",
    "Trajectory",
    "BrakeOrbit",
    "verify_conjugacy",
    "brake_shoot",
    "brake_residual",
]

BLOWUP_CEILING = 1e6


def twisted_field(H: HamiltonianSpec, theta: Optional[OneForm], t, x):
    """Right-hand side (qdot, pdot) of the twisted Hamiltonian system at (t, q, p)."""
    if isinstance(x, PhasePoint):
        q, p = x.q, x.p
    else:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1] // 2
        q, p = x[..., :n], x[..., n:]
    qdot = np.asarray(H.grad_p(t, q, p))
    pdot = -np.asarray(H.grad_q(t, q, p))
    if theta is not None:
        pdot = pdot + theta.sigma(q) @ qdot
    return qdot, pdot


def el_field(L: LagrangianSpec, t, y):
    """Right-hand side (qdot, vdot) of the Euler-Lagrange system at (t, q, v).

    Solves L_vv vdot = L_q - L_qv^T v - d_t L_v; raises SingularMass when the
    fiber Hessian is numerically singular at the evaluation point.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[-1] // 2
    q, v = y[..., :n], y[..., n:]
    mass = np.asarray(L.hess_vv(t, q, v))
    rhs = (np.asarray(L.grad_q(t, q, v))
           - np.swapaxes(np.asarray(L.hess_qv(t, q, v)), -1, -2) @ v
           - np.asarray(L.grad_tv(t, q, v)))
    try:
        cond = np.linalg.cond(mass)
    except np.linalg.LinAlgError:
        raise SingularMass("fiber Hessian not diagonalizable") from None
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMass(f"fiber Hessian condition number {cond:.2e}")
    vdot = np.linalg.solve(mass, rhs)
    return v, vdot


@dataclass
class Trajectory:
    """Sampled solution curve with dense interpolation."""

    times: np.ndarray
    states: np.ndarray
    dense: Optional[Callable] = None
    interpolation_order: int = 7  # DOP853 dense output

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory states must be finite")

    def at(self, t):
        """Interpolated state; vectorized over t."""
        if self.dense is not None:
            out = self.dense(np.asarray(t, dtype=float))
            return out.T if np.ndim(t) > 0 else out
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.stack([np.interp(t_arr, self.times, self.states[:, j])
                        for j in range(self.states.shape[1])], axis=-1)
        return out if np.ndim(t) > 0 else out[0]

    def to_csv(self, path, labels=None):
        n = self.states.shape[1] // 2
        labels = labels or ([f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + list(labels))
            for t, row in zip(self.times, self.states):
                writer.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def integrate(field, state0, t0, t1, tol=1e-10, max_step=np.inf,
              ceiling=BLOWUP_CEILING, n_out=None) -> Trajectory:
    """Adaptive explicit Runge-Kutta (DOP853) integration of a first-order field.

    field(t, y) -> dy/dt on flat state vectors.  Raises BlowUp when the state
    norm reaches the configured ceiling, signalling a non-global flow.
    """
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    y0 = np.asarray(state0, dtype=float).ravel()

    def rhs(t, y):
        return np.asarray(field(t, y), dtype=float).ravel()

    def blowup_event(t, y):
        return float(np.linalg.norm(y) - ceiling)

    blowup_event.terminal = True

    t_eval = np.linspace(t0, t1, n_out) if n_out else None
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=tol, atol=tol,
                    dense_output=True, events=blowup_event, max_step=max_step,
                    t_eval=t_eval)
    if sol.status == 1:
        raise BlowUp(f"state norm reached {ceiling:.1e} at t = {sol.t[-1]:.6g}")
    if not sol.success:
        raise NonConvergence(f"integrator failed: {sol.message}")
    return Trajectory(sol.t, sol.y.T, dense=sol.sol)


def hamiltonian_rhs(H: HamiltonianSpec, theta: Optional[OneForm]):
    """Flat-vector RHS for the (possibly twisted) Hamiltonian flow."""

    def rhs(t, y):
        n = y.shape[-1] // 2
        qd, pd = twisted_field(H, theta, t, y)
        return np.concatenate([qd, pd])

    return rhs


def lagrangian_rhs(L: LagrangianSpec):
    def rhs(t, y):
        qd, vd = el_field(L, t, y)
        return np.concatenate([qd, vd])

    return rhs


def verify_conjugacy(H: HamiltonianSpec, theta: OneForm, horizon=1.0,
                     samples=10, tol=1e-10, rng=None, p_scale=1.0,
                     n_check=33) -> float:
    """Max deviation sup || Phi(Psi_{H_theta}^t(x)) - Psi_H^t(Phi(x)) ||.

    Psi_H is the twisted flow of H, Psi_{H_theta} the standard flow of
    H_theta = H o Phi; initial points are Phi-related by construction.
    """
    rng = np.random.default_rng(0 if rng is None else rng)
    torus = H.torus
    n = torus.dim
    H_th = shifted_hamiltonian(H, theta)
    rhs_twisted = hamiltonian_rhs(H, theta)
    rhs_standard = hamiltonian_rhs(H_th, None)
    worst = 0.0
    ts = np.linspace(0.0, horizon, n_check)[1:]
    for _ in range(samples):
        q = rng.uniform(0, 1, n) * torus.periods
        p = p_scale * rng.normal(size=n)
        y_std = np.concatenate([q, p])                       # standard-side start
        th = theta.components(q)
        y_tw = np.concatenate([q, p - th])                   # Phi of it
        traj_std = integrate(rhs_standard, y_std, 0.0, horizon, tol=tol)
        traj_tw = integrate(rhs_twisted, y_tw, 0.0, horizon, tol=tol)
        std = traj_std.at(ts)
        tw = traj_tw.at(ts)
        phi_std = std.copy()
        phi_std[:, n:] -= theta.components(std[:, :n])
        worst = max(worst, float(np.max(np.abs(phi_std - tw))))
    return worst


@dataclass
class BrakeOrbit:
    """Periodic brake trajectory with its symmetry defect."""

    period: float
    trajectory: Trajectory
    symmetry_residual: float
    q0: np.ndarray

    def record(self, n_samples=129):
        ts = np.linspace(0.0, self.period, n_samples)
        return {
            "period": self.period,
            "q0": [float(x) for x in np.atleast_1d(self.q0)],
            "samples": [[float(t)] + [float(x) for x in row]
                        for t, row in zip(ts, self.trajectory.at(ts))],
            "residuals": {"brake": float(self.symmetry_residual)},
        }


def brake_residual(theta: OneForm, traj: Trajectory, tau: float,
                   n_check: int = 129) -> float:
    """sup_t || R1(x(tau - t)) - x(t) || over a dense grid (x(-t) = x(tau - t))."""
    torus = theta.torus
    n = torus.dim
    ts = np.linspace(0.0, tau, n_check)
    x_t = traj.at(ts)
    x_rev = traj.at(tau - ts)
    q_rev, p_rev = x_rev[:, :n], x_rev[:, n:]
    q_ref = q_rev
    p_ref = -p_rev - 2.0 * theta.components(q_rev)
    dq = q_ref - x_t[:, :n]
    dq -= torus.periods * np.round(dq / torus.periods)
    dp = p_ref - x_t[:, n:]
    return float(np.max(np.sqrt(np.sum(dq * dq + dp * dp, axis=1))))


def brake_shoot(H: HamiltonianSpec, theta: OneForm, q0_guess, tau: float,
                tol: float = 1e-10, newton_tol: float = 1e-9, maxit: int = 40,
                fd_step: float = 1e-6) -> BrakeOrbit:
    """Newton shooting for a tau-periodic brake orbit of the twisted flow of H.

    The unknown is q0 only; the start point (q0, -theta(q0)) lies on Fix(R1)
    and the residual F(q0) = p(tau/2) + theta(q(tau/2)) demands that the half
    trajectory ends on Fix(R1) as well.  The full orbit is the reflected
    extension, whose defect against a direct integration is reported.
    """
    torus = H.torus
    n = torus.dim
    rhs = hamiltonian_rhs(H, theta)

    def half_shot(q0):
        y0 = np.concatenate([q0, -theta.components(q0)])
        traj = integrate(rhs, y0, 0.0, 0.5 * tau, tol=tol)
        end = traj.states[-1]
        return end[:n], end[n:], traj

    def residual(q0):
        q_half, p_half, _ = half_shot(q0)
        return p_half + theta.components(q_half)

    q0 = np.asarray(q0_guess, dtype=float).copy()
    F = residual(q0)
    norm = np.linalg.norm(F)
    for _ in range(maxit):
        if norm <= newton_tol:
            break
        jac = np.empty((n, n))
        for j in range(n):
            dq = np.zeros(n)
            dq[j] = fd_step
            jac[:, j] = (residual(q0 + dq) - residual(q0 - dq)) / (2 * fd_step)
        try:
            step = np.linalg.solve(jac, -F)
        except np.linalg.LinAlgError:
            raise NonConvergence("singular shooting Jacobian") from None
        alpha = 1.0
        for _ in range(30):
            trial = q0 + alpha * step
            F_trial = residual(trial)
            n_trial = np.linalg.norm(F_trial)
            if n_trial < norm:
                q0, F, norm = trial, F_trial, n_trial
                break
            alpha *= 0.5
        else:
            raise NonConvergence(f"brake shooting stalled at |F| = {norm:.3e}")
    if norm > newton_tol:
        raise NonConvergence(f"brake shooting: |F| = {norm:.3e} after {maxit} iterations")

    q0 = torus.wrap(q0)
    y0 = np.concatenate([q0, -theta.components(q0)])
    traj = integrate(rhs, y0, 0.0, tau, tol=tol)
    resid = brake_residual(theta, traj, tau)
    if resid > max(1e-6, 10 * newton_tol * tau):
        raise SymmetryViolation(
            f"reflected extension fails the flow equations (residual {resid:.3e}); "
            "check the R1 symmetry of H")
    return BrakeOrbit(tau, traj, resid, q0)
